//! Correctly rounded floating-point summation.
//!
//! Cost bookkeeping compares sums of many `-c` rewards against `c * n + J`.
//! Plain left-to-right addition accumulates one rounding per term, so both
//! sides are computed here as the correctly rounded value of their exact
//! real sum (Shewchuk's non-overlapping partials).

/// Sum of `values`, rounded once from the exact real result.
pub fn exact_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut partials: Vec<f64> = Vec::new();
    for mut x in values {
        let mut kept = 0;
        for j in 0..partials.len() {
            let mut y = partials[j];
            if x.abs() < y.abs() {
                std::mem::swap(&mut x, &mut y);
            }
            let hi = x + y;
            let lo = y - (hi - x);
            if lo != 0.0 {
                partials[kept] = lo;
                kept += 1;
            }
            x = hi;
        }
        partials.truncate(kept);
        partials.push(x);
    }
    round_partials(&partials)
}

fn round_partials(partials: &[f64]) -> f64 {
    let Some((&last, rest)) = partials.split_last() else {
        return 0.0;
    };
    let mut hi = last;
    let mut lo = 0.0;
    let mut i = rest.len();
    while i > 0 {
        i -= 1;
        let x = hi;
        let y = rest[i];
        hi = x + y;
        let yr = hi - x;
        lo = y - yr;
        if lo != 0.0 {
            break;
        }
    }
    // Half-way case: the remaining partials decide the rounding direction.
    if i > 0 && ((lo < 0.0 && rest[i - 1] < 0.0) || (lo > 0.0 && rest[i - 1] > 0.0)) {
        let y = lo * 2.0;
        let x = hi + y;
        if y == x - hi {
            hi = x;
        }
    }
    hi
}

/// Correctly rounded value of `a * n + b` for a float `a` and integer `n`.
pub fn exact_mul_add(a: f64, n: u64, b: f64) -> f64 {
    let nf = n as f64;
    debug_assert!(n < (1u64 << 53));
    let p = a * nf;
    let e = a.mul_add(nf, -p);
    exact_sum([p, e, b])
}
