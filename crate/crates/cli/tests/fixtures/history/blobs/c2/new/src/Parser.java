package demo;

public class Parser {
  String parse(String s) {
    if (s == null || s.isEmpty()) return "";
    String t = s.strip();
    int n = t.length();
    for (int i = 0; i < n; i++) {
      t = t.replace(" ", "");
    }
    return t;
  }
}
