//! Pool-adjacent-violators projection onto non-decreasing sequences.

/// Replaces `values` by its least-squares non-decreasing fit (unit weights).
/// Leaves already monotone input untouched.
pub fn monotonize(values: &mut [f64]) {
    if values.windows(2).all(|w| w[0] <= w[1]) {
        return;
    }
    // Blocks as (sum, count); merged while the block means decrease.
    let mut blocks: Vec<(f64, usize)> = Vec::with_capacity(values.len());
    for &v in values.iter() {
        blocks.push((v, 1));
        while blocks.len() > 1 {
            let (s1, c1) = blocks[blocks.len() - 1];
            let (s0, c0) = blocks[blocks.len() - 2];
            if s0 / c0 as f64 > s1 / c1 as f64 {
                blocks.pop();
                let last = blocks.len() - 1;
                blocks[last] = (s0 + s1, c0 + c1);
            } else {
                break;
            }
        }
    }
    let mut i = 0;
    for (sum, count) in blocks {
        let mean = sum / count as f64;
        for v in &mut values[i..i + count] {
            *v = mean;
        }
        i += count;
    }
}
