"""Twenty hand-picked Java methods exercising every edge rule."""

GOLDEN = {
    "straight_line": "int f(int a, int b) { int c = a + b; c = c * 2; return c; }",
    "if_else": "int f(){ if(a>0) b=1; else b=2; return b; }",
    "if_only": "void f(int x) { if (x > 0) { x = -x; } System.out.println(x); }",
    "else_if_chain": """int sign(int v) {
        if (v > 0) { return 1; }
        else if (v < 0) { return -1; }
        else { return 0; }
    }""",
    "while_loop": "int f(){int a=0; while(a<10){a=a+1;} return a;}",
    "for_loop": """int sum(int[] xs) {
        int s = 0;
        for (int i = 0; i < xs.length; i++) { s += xs[i]; }
        return s;
    }""",
    "enhanced_for": """int total(java.util.List<Integer> items) {
        int t = 0;
        for (Integer item : items) t += item;
        return t;
    }""",
    "nested_loops": """void grid(int n) {
        for (int i = 0; i < n; i++) {
            int j = 0;
            while (j < i) { if (j % 2 == 0) { j += 2; } else { j++; } }
        }
    }""",
    "do_while": "int f(int n) { int k = 0; do { k++; n /= 2; } while (n > 0); return k; }",
    "switch_stmt": """String name(int d) {
        String r;
        switch (d) {
            case 0: r = "zero"; break;
            case 1: r = "one"; break;
            default: r = "many";
        }
        return r;
    }""",
    "try_catch": """int parse(String s) {
        int v = 0;
        try { v = Integer.parseInt(s); }
        catch (NumberFormatException e) { v = -1; }
        finally { System.out.println(s); }
        return v;
    }""",
    "ternary_cast": "long f(double d, int k) { int r = (int) d; return k > r ? (long) k : r; }",
    "shifts_and_bits": "int f(int x) { int y = x >> 2; int z = y >>> 1; x = x << 3 | z & 7; return x ^ y; }",
    "string_ops": """String greet(String who) {
        StringBuilder sb = new StringBuilder();
        sb.append("hi ").append(who).append('!');
        return sb.toString();
    }""",
    "array_creation": """int[] fill(int n) {
        int[] out = new int[n];
        int[] seed = {1, 2, 3};
        for (int i = 0; i < n; i++) out[i] = seed[i % 3];
        return out;
    }""",
    "lambda_generic": """java.util.List<String> upper(java.util.List<String> xs) {
        java.util.List<String> res = new java.util.ArrayList<String>();
        xs.forEach(x -> res.add(x.toUpperCase()));
        return res;
    }""",
    "annotated_throws": """@Override
    public synchronized void close() throws java.io.IOException {
        if (open) { open = false; stream.close(); }
    }""",
    "shadow_names": """int f(int a) {
        int b = a;
        { int c = b; b = c + a; }
        { int c = a; a = c; }
        return a + b;
    }""",
    "nested_if_in_while": """int collatz(int n) {
        int steps = 0;
        while (n != 1) {
            if (n % 2 == 0) n = n / 2; else n = 3 * n + 1;
            steps++;
        }
        return steps;
    }""",
    "empty_body": "void nothing() { }",
}
