//! Finite-difference gradient checking.
//!
//! Central differences with h = 1e-5 against the analytic gradients from
//! [`Graph::backward`]. Used by the per-primitive test suite and by the
//! `gradcheck` CLI command.

use super::{Graph, NodeId, Tensor};
use crate::error::Result;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-5;
pub const PRIMITIVE_TOLERANCE: f64 = 1e-4;

/// Relative error with a floor so that near-zero gradient pairs compare
/// on an absolute scale.
pub fn rel_error(analytic: f64, numeric: f64) -> f64 {
    if analytic == 0.0 && numeric == 0.0 {
        return 0.0;
    }
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// Central finite difference of `f` at `x`, one element at a time.
pub fn finite_diff<F>(mut f: F, x: &[f64], h: f64) -> Vec<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    let mut grad = vec![0.0; x.len()];
    let mut probe = x.to_vec();
    for i in 0..x.len() {
        let orig = probe[i];
        probe[i] = orig + h;
        let plus = f(&probe);
        probe[i] = orig - h;
        let minus = f(&probe);
        probe[i] = orig;
        grad[i] = (plus - minus) / (2.0 * h);
    }
    grad
}

/// Result of checking one primitive or one named parameter group.
#[derive(Debug, Clone)]
pub struct CheckOutcome {
    pub name: String,
    pub max_rel_err: f64,
}

impl CheckOutcome {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_rel_err < tolerance
    }
}

type LossBuilder = dyn Fn(&mut Graph, &[NodeId]) -> Result<NodeId>;

struct Case {
    name: &'static str,
    inputs: Vec<Tensor>,
    build: Box<LossBuilder>,
}

impl Case {
    fn run(&self, h: f64) -> Result<CheckOutcome> {
        // analytic pass
        let mut g = Graph::new();
        let ids: Vec<NodeId> = self
            .inputs
            .iter()
            .map(|t| g.leaf(t.clone().with_grad()))
            .collect();
        let loss = (self.build)(&mut g, &ids)?;
        g.backward(loss)?;
        let analytic: Vec<Vec<f64>> = ids
            .iter()
            .map(|&id| g.grad(id).expect("leaf requires grad").to_vec())
            .collect();

        // numeric pass, one input tensor at a time
        let mut worst = 0.0_f64;
        for (which, input) in self.inputs.iter().enumerate() {
            let numeric = finite_diff(
                |flat| {
                    let mut g = Graph::new();
                    let ids: Vec<NodeId> = self
                        .inputs
                        .iter()
                        .enumerate()
                        .map(|(i, t)| {
                            let tensor = if i == which {
                                Tensor::new(t.shape().to_vec(), flat.to_vec())
                                    .expect("same shape")
                            } else {
                                t.clone()
                            };
                            g.leaf(tensor)
                        })
                        .collect();
                    let loss = (self.build)(&mut g, &ids).expect("forward already succeeded");
                    g.value(loss).item().expect("scalar loss")
                },
                input.data(),
                h,
            );
            for (a, n) in analytic[which].iter().zip(&numeric) {
                worst = worst.max(rel_error(*a, *n));
            }
        }
        Ok(CheckOutcome {
            name: self.name.to_string(),
            max_rel_err: worst,
        })
    }
}

fn rand_tensor(shape: Vec<usize>, rng: &mut ChaCha8Rng) -> Tensor {
    let numel: usize = shape.iter().product();
    let data = (0..numel).map(|_| rng.random_range(-1.0..1.0)).collect();
    Tensor::new(shape, data).expect("shape matches data")
}

/// Random tensor whose entries stay away from a kink or singular point.
fn rand_tensor_away_from(shape: Vec<usize>, keep_out: f64, rng: &mut ChaCha8Rng) -> Tensor {
    let numel: usize = shape.iter().product();
    let data = (0..numel)
        .map(|_| {
            let v: f64 = rng.random_range(-1.0..1.0);
            if v.abs() < keep_out {
                if v >= 0.0 {
                    v + 2.0 * keep_out
                } else {
                    v - 2.0 * keep_out
                }
            } else {
                v
            }
        })
        .collect();
    Tensor::new(shape, data).expect("shape matches data")
}

fn rand_positive(shape: Vec<usize>, rng: &mut ChaCha8Rng) -> Tensor {
    let numel: usize = shape.iter().product();
    let data = (0..numel).map(|_| rng.random_range(0.5..1.5)).collect();
    Tensor::new(shape, data).expect("shape matches data")
}

/// Reduces an arbitrary output to a scalar by a fixed random weighting, so
/// every output element influences the loss.
fn weighted(g: &mut Graph, out: NodeId, weights: &Tensor) -> Result<NodeId> {
    let w = g.constant(weights.clone());
    let prod = g.mul(out, w)?;
    Ok(g.sum(prod))
}

/// Runs the finite-difference check over every differentiable primitive
/// and a small composite graph. Deterministic for a given seed.
pub fn check_primitives(seed: u64) -> Result<Vec<CheckOutcome>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cases: Vec<Case> = Vec::new();

    let w23 = rand_tensor(vec![2, 3], &mut rng);
    cases.push(Case {
        name: "add",
        inputs: vec![rand_tensor(vec![2, 3], &mut rng), rand_tensor(vec![2, 3], &mut rng)],
        build: {
            let w = w23.clone();
            Box::new(move |g, ids| {
                let out = g.add(ids[0], ids[1])?;
                weighted(g, out, &w)
            })
        },
    });

    cases.push(Case {
        name: "add_row",
        inputs: vec![rand_tensor(vec![2, 3], &mut rng), rand_tensor(vec![3], &mut rng)],
        build: {
            let w = w23.clone();
            Box::new(move |g, ids| {
                let out = g.add_row(ids[0], ids[1])?;
                weighted(g, out, &w)
            })
        },
    });

    cases.push(Case {
        name: "add_scalar",
        inputs: vec![rand_tensor(vec![2, 3], &mut rng)],
        build: {
            let w = w23.clone();
            Box::new(move |g, ids| {
                let out = g.add_scalar(ids[0], 0.37);
                weighted(g, out, &w)
            })
        },
    });

    cases.push(Case {
        name: "add_bscalar",
        inputs: vec![rand_tensor(vec![2, 3], &mut rng), rand_tensor(vec![1], &mut rng)],
        build: {
            let w = w23.clone();
            Box::new(move |g, ids| {
                let out = g.add_bscalar(ids[0], ids[1])?;
                weighted(g, out, &w)
            })
        },
    });

    cases.push(Case {
        name: "multiply",
        inputs: vec![rand_tensor(vec![2, 3], &mut rng), rand_tensor(vec![2, 3], &mut rng)],
        build: {
            let w = w23.clone();
            Box::new(move |g, ids| {
                let out = g.mul(ids[0], ids[1])?;
                weighted(g, out, &w)
            })
        },
    });

    cases.push(Case {
        name: "scale",
        inputs: vec![rand_tensor(vec![2, 3], &mut rng)],
        build: {
            let w = w23.clone();
            Box::new(move |g, ids| {
                let out = g.scale(ids[0], -1.3);
                weighted(g, out, &w)
            })
        },
    });

    let w24 = rand_tensor(vec![2, 4], &mut rng);
    cases.push(Case {
        name: "matmul",
        inputs: vec![rand_tensor(vec![2, 3], &mut rng), rand_tensor(vec![3, 4], &mut rng)],
        build: {
            let w = w24.clone();
            Box::new(move |g, ids| {
                let out = g.matmul(ids[0], ids[1])?;
                weighted(g, out, &w)
            })
        },
    });

    let w32 = rand_tensor(vec![3, 2], &mut rng);
    cases.push(Case {
        name: "transpose",
        inputs: vec![rand_tensor(vec![2, 3], &mut rng)],
        build: {
            let w = w32.clone();
            Box::new(move |g, ids| {
                let out = g.transpose(ids[0])?;
                weighted(g, out, &w)
            })
        },
    });

    let w5 = rand_tensor(vec![5], &mut rng);
    cases.push(Case {
        name: "concat_vectors",
        inputs: vec![rand_tensor(vec![3], &mut rng), rand_tensor(vec![2], &mut rng)],
        build: {
            let w = w5.clone();
            Box::new(move |g, ids| {
                let out = g.concat_last(ids)?;
                weighted(g, out, &w)
            })
        },
    });

    let w25 = rand_tensor(vec![2, 5], &mut rng);
    cases.push(Case {
        name: "concat_columns",
        inputs: vec![rand_tensor(vec![2, 2], &mut rng), rand_tensor(vec![2, 3], &mut rng)],
        build: {
            let w = w25.clone();
            Box::new(move |g, ids| {
                let out = g.concat_last(ids)?;
                weighted(g, out, &w)
            })
        },
    });

    let w4 = rand_tensor(vec![4], &mut rng);
    cases.push(Case {
        name: "slice_row",
        inputs: vec![rand_tensor(vec![3, 4], &mut rng)],
        build: {
            let w = w4.clone();
            Box::new(move |g, ids| {
                let out = g.slice_row(ids[0], 1)?;
                weighted(g, out, &w)
            })
        },
    });

    cases.push(Case {
        name: "slice_index",
        inputs: vec![rand_tensor(vec![5], &mut rng)],
        build: Box::new(move |g, ids| {
            let out = g.slice_index(ids[0], 2)?;
            Ok(g.scale(out, 1.7))
        }),
    });

    let w33 = rand_tensor(vec![3, 3], &mut rng);
    cases.push(Case {
        name: "slice_cols",
        inputs: vec![rand_tensor(vec![3, 6], &mut rng)],
        build: {
            let w = w33.clone();
            Box::new(move |g, ids| {
                let out = g.slice_cols(ids[0], 2, 3)?;
                weighted(g, out, &w)
            })
        },
    });

    let w34 = rand_tensor(vec![3, 4], &mut rng);
    cases.push(Case {
        name: "reshape",
        inputs: vec![rand_tensor(vec![2, 6], &mut rng)],
        build: {
            let w = w34.clone();
            Box::new(move |g, ids| {
                let out = g.reshape(ids[0], vec![3, 4])?;
                weighted(g, out, &w)
            })
        },
    });

    let w43 = rand_tensor(vec![4, 3], &mut rng);
    cases.push(Case {
        name: "embedding_lookup",
        inputs: vec![rand_tensor(vec![5, 3], &mut rng)],
        build: {
            let w = w43.clone();
            Box::new(move |g, ids| {
                // id 2 repeats: gradients must accumulate
                let out = g.embedding(ids[0], &[0, 2, 2, 4])?;
                weighted(g, out, &w)
            })
        },
    });

    cases.push(Case {
        name: "layer_norm",
        inputs: vec![
            rand_tensor(vec![3, 4], &mut rng),
            rand_positive(vec![4], &mut rng),
            rand_tensor(vec![4], &mut rng),
        ],
        build: {
            let w = w34.clone();
            Box::new(move |g, ids| {
                let out = g.layer_norm(ids[0], ids[1], ids[2])?;
                weighted(g, out, &w)
            })
        },
    });

    cases.push(Case {
        name: "relu",
        inputs: vec![rand_tensor_away_from(vec![2, 3], 0.05, &mut rng)],
        build: {
            let w = w23.clone();
            Box::new(move |g, ids| {
                let out = g.relu(ids[0]);
                weighted(g, out, &w)
            })
        },
    });

    cases.push(Case {
        name: "softmax_rows",
        inputs: vec![rand_tensor(vec![2, 4], &mut rng)],
        build: {
            let w = w24.clone();
            Box::new(move |g, ids| {
                let out = g.softmax(ids[0], 1)?;
                weighted(g, out, &w)
            })
        },
    });

    cases.push(Case {
        name: "softmax_vector",
        inputs: vec![rand_tensor(vec![5], &mut rng)],
        build: {
            let w = w5.clone();
            Box::new(move |g, ids| {
                let out = g.softmax(ids[0], 0)?;
                weighted(g, out, &w)
            })
        },
    });

    cases.push(Case {
        name: "log",
        inputs: vec![rand_positive(vec![2, 3], &mut rng)],
        build: {
            let w = w23.clone();
            Box::new(move |g, ids| {
                let out = g.log(ids[0]);
                weighted(g, out, &w)
            })
        },
    });

    cases.push(Case {
        name: "exp",
        inputs: vec![rand_tensor(vec![2, 3], &mut rng)],
        build: {
            let w = w23.clone();
            Box::new(move |g, ids| {
                let out = g.exp(ids[0]);
                weighted(g, out, &w)
            })
        },
    });

    cases.push(Case {
        name: "sum",
        inputs: vec![rand_tensor(vec![2, 3], &mut rng)],
        build: Box::new(move |g, ids| {
            let out = g.sum(ids[0]);
            Ok(g.scale(out, 0.9))
        }),
    });

    cases.push(Case {
        name: "mean",
        inputs: vec![rand_tensor(vec![2, 3], &mut rng)],
        build: Box::new(move |g, ids| {
            let out = g.mean(ids[0]);
            Ok(g.scale(out, 1.1))
        }),
    });

    let mut u = rand_tensor(vec![4], &mut rng);
    let mut v = rand_tensor(vec![4], &mut rng);
    // keep norms comfortably away from the guard
    u.data_mut()[0] += 1.0;
    v.data_mut()[1] -= 1.0;
    cases.push(Case {
        name: "cosine",
        inputs: vec![u, v],
        build: Box::new(move |g, ids| {
            let out = g.cosine(ids[0], ids[1])?;
            Ok(g.scale(out, 1.3))
        }),
    });

    let w32b = rand_tensor(vec![3, 2], &mut rng);
    cases.push(Case {
        name: "attention",
        inputs: vec![
            rand_tensor(vec![3, 2], &mut rng),
            rand_tensor(vec![3, 2], &mut rng),
            rand_tensor(vec![3, 2], &mut rng),
        ],
        build: {
            let w = w32b.clone();
            Box::new(move |g, ids| {
                let (out, _probs) = g.attention(ids[0], ids[1], ids[2], None)?;
                weighted(g, out, &w)
            })
        },
    });

    cases.push(Case {
        name: "log_softmax",
        inputs: vec![rand_tensor(vec![5], &mut rng)],
        build: {
            let w = w5.clone();
            Box::new(move |g, ids| {
                let out = g.log_softmax(ids[0])?;
                weighted(g, out, &w)
            })
        },
    });

    // A small graph mixing five parameters through several ops, the
    // "random graph vs finite differences" check.
    cases.push(Case {
        name: "composite_graph",
        inputs: vec![
            rand_tensor(vec![3], &mut rng),
            rand_tensor(vec![3, 3], &mut rng),
            rand_tensor(vec![3], &mut rng),
            rand_tensor(vec![1], &mut rng),
            {
                let mut t = rand_tensor(vec![3], &mut rng);
                t.data_mut()[2] += 1.0;
                t
            },
        ],
        build: Box::new(move |g, ids| {
            let row = g.reshape(ids[0], vec![1, 3])?;
            let proj = g.matmul(row, ids[1])?;
            let flat = g.reshape(proj, vec![3])?;
            let shifted = g.add(flat, ids[2])?;
            let scaled = g.add_bscalar(shifted, ids[3])?;
            let sim = g.cosine(scaled, ids[4])?;
            let sm = g.log_softmax(scaled)?;
            let picked = g.slice_index(sm, 1)?;
            let both = g.concat_last(&[sim, picked])?;
            Ok(g.sum(both))
        }),
    });

    cases.iter().map(|c| c.run(FD_STEP)).collect()
}
