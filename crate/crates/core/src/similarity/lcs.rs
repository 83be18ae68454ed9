//! Longest-common-subsequence length over interned symbols.
//!
//! Bit-parallel (Allison-Dix / Hyyrö): one pass over `b` with `ceil(|a|/64)`
//! words of state, so a pair of 300-token snippets costs ~1500 word ops.

use std::collections::HashMap;
use std::hash::Hash;

/// Length of an LCS of `a` and `b`.
pub fn lcs_len<T: Eq + Hash>(a: &[T], b: &[T]) -> usize {
    // the shorter side becomes the bit pattern
    let (a, b) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    if a.is_empty() {
        return 0;
    }
    let words = a.len().div_ceil(64);
    let mut pm: HashMap<&T, Vec<u64>> = HashMap::new();
    for (i, sym) in a.iter().enumerate() {
        pm.entry(sym).or_insert_with(|| vec![0; words])[i / 64] |= 1 << (i % 64);
    }

    let mut v = vec![u64::MAX; words];
    for sym in b {
        let Some(mask) = pm.get(sym) else { continue };
        let mut carry = 0u64;
        for (vw, &m) in v.iter_mut().zip(mask) {
            let u = *vw & m;
            let (sum, c1) = vw.overflowing_add(u);
            let (sum, c2) = sum.overflowing_add(carry);
            carry = u64::from(c1 | c2);
            // u is a subset of vw, so the subtraction never borrows
            *vw = sum | (*vw - u);
        }
    }

    let tail = a.len() % 64;
    let zeros: usize = v
        .iter()
        .enumerate()
        .map(|(w, &vw)| {
            let live = if w + 1 == words && tail != 0 { (1u64 << tail) - 1 } else { u64::MAX };
            (!vw & live).count_ones() as usize
        })
        .sum();
    zeros
}
