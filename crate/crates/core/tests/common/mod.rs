//! Straight-line reference implementation of the three model forwards,
//! written from the documented parameter layout. Besides the class
//! probabilities it reports the activation pattern (ReLU signs and max-pool
//! winners), which pins down the linear piece the loss is evaluated on.

#![allow(dead_code)]

use fedvote::models::{ArchKind, Architecture};

pub struct Forward {
    /// One row of class probabilities per sample.
    pub probs: Vec<Vec<f64>>,
    pub pattern: Vec<usize>,
}

fn softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

/// `out[j] = b[j] + Σ_i x[i] · w[i * cols + j]`
fn dense(x: &[f64], w: &[f64], b: &[f64]) -> Vec<f64> {
    let cols = b.len();
    (0..cols)
        .map(|j| {
            b[j] + x
                .iter()
                .enumerate()
                .map(|(i, v)| v * w[i * cols + j])
                .sum::<f64>()
        })
        .collect()
}

pub fn forward(arch: &Architecture, theta: &[f64], x: &[f64]) -> Forward {
    let d = arch.input_len();
    let n = arch.num_classes;
    let mut probs = Vec::new();
    let mut pattern = Vec::new();
    for sample in x.chunks(d) {
        let z = match arch.kind {
            ArchKind::Linear => dense(sample, &theta[..d * n], &theta[d * n..d * n + n]),
            ArchKind::Mlp => {
                let h = arch.hidden;
                let (w1, rest) = theta.split_at(d * h);
                let (b1, rest) = rest.split_at(h);
                let (w2, b2) = rest.split_at(h * n);
                let pre = dense(sample, w1, b1);
                pattern.extend(pre.iter().map(|&v| (v > 0.0) as usize));
                let hidden: Vec<f64> = pre.iter().map(|&v| v.max(0.0)).collect();
                dense(&hidden, w2, b2)
            }
            ArchKind::Cnn => {
                let (ih, iw, c) = (
                    arch.input_shape[0],
                    arch.input_shape[1],
                    arch.input_shape[2],
                );
                let (k, f) = (arch.conv.kernel, arch.conv.filters);
                let (oh, ow) = (ih - k + 1, iw - k + 1);
                let (ph, pw) = (oh / 2, ow / 2);
                let (kern, rest) = theta.split_at(k * k * c * f);
                let (kb, rest) = rest.split_at(f);
                let (w, b) = rest.split_at(ph * pw * f * n);

                let mut act = vec![0.0; oh * ow * f];
                for y in 0..oh {
                    for xx in 0..ow {
                        for fi in 0..f {
                            let mut s = kb[fi];
                            for dy in 0..k {
                                for dx in 0..k {
                                    for ch in 0..c {
                                        s += sample[((y + dy) * iw + xx + dx) * c + ch]
                                            * kern[((dy * k + dx) * c + ch) * f + fi];
                                    }
                                }
                            }
                            pattern.push((s > 0.0) as usize);
                            act[(y * ow + xx) * f + fi] = s.max(0.0);
                        }
                    }
                }
                let mut pooled = Vec::with_capacity(ph * pw * f);
                for py in 0..ph {
                    for px in 0..pw {
                        for fi in 0..f {
                            let at = |dy: usize, dx: usize| {
                                act[((2 * py + dy) * ow + 2 * px + dx) * f + fi]
                            };
                            let mut best = (at(0, 0), 0);
                            for (slot, (dy, dx)) in [(0, 1), (1, 0), (1, 1)].into_iter().enumerate()
                            {
                                if at(dy, dx) > best.0 {
                                    best = (at(dy, dx), slot + 1);
                                }
                            }
                            pattern.push(best.1);
                            pooled.push(best.0);
                        }
                    }
                }
                dense(&pooled, w, b)
            }
        };
        probs.push(softmax(&z));
    }
    Forward { probs, pattern }
}

/// Per-sample clamped cross-entropy.
pub fn sample_losses(probs: &[Vec<f64>], labels: &[usize]) -> Vec<f64> {
    probs
        .iter()
        .zip(labels)
        .map(|(p, &l)| -p[l].max(1e-12).ln())
        .collect()
}
