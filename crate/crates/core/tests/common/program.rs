//! Random well-formed programs over a small statement grammar.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const VARS: [&str; 6] = ["v0", "v1", "v2", "v3", "v4", "v5"];

struct Gen {
    rng: ChaCha8Rng,
    out: String,
}

impl Gen {
    fn var(&mut self) -> &'static str {
        VARS[self.rng.random_range(0..VARS.len())]
    }

    fn expr(&mut self) -> String {
        match self.rng.random_range(0..6) {
            0 => self.var().to_string(),
            1 => self.rng.random_range(0..10).to_string(),
            2 => format!("{} + {}", self.var(), self.var()),
            3 => format!("len({})", self.var()),
            4 => format!("{} * 2", self.var()),
            _ => format!("{}[{}]", self.var(), self.rng.random_range(0..3)),
        }
    }

    fn line(&mut self, depth: usize, text: &str) {
        self.out.push_str(&"    ".repeat(depth));
        self.out.push_str(text);
        self.out.push('\n');
    }

    fn block(&mut self, depth: usize, budget: usize) {
        let n = self.rng.random_range(1..=budget.max(1));
        for _ in 0..n {
            let nest = depth < 3 && budget > 1;
            match self.rng.random_range(0..if nest { 7 } else { 5 }) {
                0 | 1 => {
                    let s = format!("{} = {}", self.var(), self.expr());
                    self.line(depth, &s)
                }
                2 => {
                    let s = format!("{} += {}", self.var(), self.expr());
                    self.line(depth, &s)
                }
                3 => {
                    let s = format!("{}.append({})", self.var(), self.expr());
                    self.line(depth, &s)
                }
                4 => {
                    let s = format!("print({})", self.expr());
                    self.line(depth, &s)
                }
                5 => {
                    let s = format!("for {} in range({}):", self.var(), self.expr());
                    self.line(depth, &s);
                    self.block(depth + 1, budget / 2);
                }
                _ => {
                    let op = ["<", ">", "==", "!="][self.rng.random_range(0..4)];
                    let s = format!("if {} {op} {}:", self.var(), self.expr());
                    self.line(depth, &s);
                    self.block(depth + 1, budget / 2);
                }
            }
        }
    }
}

pub fn random_program(seed: u64) -> String {
    let mut g = Gen { rng: ChaCha8Rng::seed_from_u64(seed), out: String::new() };
    let params = g.rng.random_range(1..=3);
    g.line(0, &format!("def f({}):", VARS[..params].join(", ")));
    g.block(1, 6);
    let ret = format!("return {}", g.expr());
    g.line(1, &ret);
    g.out
}

/// Rename every variable consistently; keywords, builtins and the function
/// name are untouched.
pub fn rename(src: &str) -> String {
    let mut out = src.to_string();
    for v in VARS {
        out = out.replace(v, &format!("renamed_{}", &v[1..]));
    }
    out
}
