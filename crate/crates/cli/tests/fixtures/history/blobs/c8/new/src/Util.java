package demo;

public class Util {
  static String trim(String s) {
    return s.trim();
  }
  static int clamp(int v, int lo, int hi) {
    if (v < lo) return lo;
    if (v > hi) { System.err.println("clamp"); return hi; }
    return Math.max(lo, Math.min(v, hi));
  }
}
