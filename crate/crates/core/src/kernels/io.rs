//! Flat text serialization of kernels.
//!
//! ```text
//! mlfht-kernel v1
//! type deep_m
//! log_sigma -0.1
//! log_sigma0 0.2
//! logit_tau 0
//! net phi 2,8,4
//! layer 2 8
//! <8 rows of 2 comma-separated weights>
//! bias <8 comma-separated values>
//! layer 8 4
//! ...
//! ```
//!
//! Values are written with the shortest representation that parses back to
//! the same `f64`, so a save/load cycle is lossless and byte-stable.

use std::fmt::Write as _;

use super::{FeatureNet, KernelSpec, Layer};
use crate::error::{invalid, Error, Result};

const MAGIC: &str = "mlfht-kernel v1";

pub fn write_kernel_text(kernel: &KernelSpec) -> Result<String> {
    let mut out = String::new();
    let _ = writeln!(out, "{MAGIC}");
    let _ = writeln!(out, "type {}", kernel.type_name());
    match kernel {
        KernelSpec::DiscreteIdentity { k } => {
            let _ = writeln!(out, "k {k}");
        }
        KernelSpec::Gaussian { sigma, normalized } => {
            let _ = writeln!(out, "sigma {sigma:?}");
            let _ = writeln!(out, "normalized {normalized}");
        }
        KernelSpec::DeepO { log_sigma } => {
            let _ = writeln!(out, "log_sigma {log_sigma:?}");
        }
        KernelSpec::DeepG { phi, log_sigma } => {
            let _ = writeln!(out, "log_sigma {log_sigma:?}");
            write_net(&mut out, "phi", phi);
        }
        KernelSpec::DeepM {
            phi,
            phi_prime,
            log_sigma,
            log_sigma0,
            logit_tau,
        } => {
            let _ = writeln!(out, "log_sigma {log_sigma:?}");
            let _ = writeln!(out, "log_sigma0 {log_sigma0:?}");
            let _ = writeln!(out, "logit_tau {logit_tau:?}");
            write_net(&mut out, "phi", phi);
            write_net(&mut out, "phi_prime", phi_prime);
        }
        KernelSpec::ProductWitness(_) | KernelSpec::Scaled { .. } => {
            return Err(invalid(format!(
                "{} kernels hold closures and cannot be serialized",
                kernel.type_name()
            )))
        }
    }
    Ok(out)
}

fn join(vals: &[f64]) -> String {
    vals.iter().map(|v| format!("{v:?}")).collect::<Vec<_>>().join(",")
}

fn write_net(out: &mut String, name: &str, net: &FeatureNet) {
    let widths: Vec<String> = net.widths().iter().map(|w| w.to_string()).collect();
    let _ = writeln!(out, "net {name} {}", widths.join(","));
    for l in net.layers() {
        let _ = writeln!(out, "layer {} {}", l.in_dim, l.out_dim);
        for row in l.weights.chunks(l.in_dim) {
            let _ = writeln!(out, "{}", join(row));
        }
        let _ = writeln!(out, "bias {}", join(&l.bias));
    }
}

struct Lines<'a> {
    inner: std::iter::Peekable<std::iter::Enumerate<std::str::Lines<'a>>>,
}

impl<'a> Lines<'a> {
    fn next(&mut self) -> Result<(usize, &'a str)> {
        for (i, l) in self.inner.by_ref() {
            let t = l.trim();
            if !t.is_empty() {
                return Ok((i + 1, t));
            }
        }
        Err(Error::Parse {
            line: 0,
            message: "unexpected end of kernel file".into(),
        })
    }

    fn keyed(&mut self, key: &str) -> Result<(usize, &'a str)> {
        let (line, l) = self.next()?;
        match l.split_once(' ') {
            Some((k, rest)) if k == key => Ok((line, rest.trim())),
            _ => Err(Error::Parse {
                line,
                message: format!("expected `{key} ...`, found {l:?}"),
            }),
        }
    }

    fn f64_value(&mut self, key: &str) -> Result<f64> {
        let (line, v) = self.keyed(key)?;
        parse_f64(line, v)
    }
}

fn parse_f64(line: usize, v: &str) -> Result<f64> {
    v.trim().parse().map_err(|e| Error::Parse {
        line,
        message: format!("bad number {v:?}: {e}"),
    })
}

fn parse_list(line: usize, v: &str) -> Result<Vec<f64>> {
    v.split(',').map(|t| parse_f64(line, t)).collect()
}

fn read_net(lines: &mut Lines<'_>, name: &str) -> Result<FeatureNet> {
    let (line, rest) = lines.keyed("net")?;
    let (got_name, widths) = rest.split_once(' ').ok_or_else(|| Error::Parse {
        line,
        message: "net line needs a name and widths".into(),
    })?;
    if got_name != name {
        return Err(Error::Parse {
            line,
            message: format!("expected network {name}, found {got_name}"),
        });
    }
    let widths: Vec<usize> = widths
        .split(',')
        .map(|w| {
            w.trim().parse().map_err(|e| Error::Parse {
                line,
                message: format!("bad width {w:?}: {e}"),
            })
        })
        .collect::<Result<_>>()?;
    let mut layers = Vec::new();
    for w in widths.windows(2) {
        let (line, dims) = lines.keyed("layer")?;
        let expect = format!("{} {}", w[0], w[1]);
        if dims != expect {
            return Err(Error::Parse {
                line,
                message: format!("layer shape {dims:?} does not match widths ({expect})"),
            });
        }
        let mut weights = Vec::with_capacity(w[0] * w[1]);
        for _ in 0..w[1] {
            let (line, row) = lines.next()?;
            let vals = parse_list(line, row)?;
            if vals.len() != w[0] {
                return Err(Error::Parse {
                    line,
                    message: format!("expected {} weights, found {}", w[0], vals.len()),
                });
            }
            weights.extend(vals);
        }
        let (line, b) = lines.keyed("bias")?;
        let bias = parse_list(line, b)?;
        layers.push(Layer {
            in_dim: w[0],
            out_dim: w[1],
            weights,
            bias,
        });
    }
    FeatureNet::from_layers(layers)
}

/// Inverse of [`write_kernel_text`].
pub fn parse_kernel(text: &str) -> Result<KernelSpec> {
    let mut lines = Lines {
        inner: text.lines().enumerate().peekable(),
    };
    let (line, magic) = lines.next()?;
    if magic != MAGIC {
        return Err(Error::Parse {
            line,
            message: format!("not a kernel file (header {magic:?})"),
        });
    }
    let (line, ty) = lines.keyed("type")?;
    let kernel = match ty {
        "identity" => {
            let (line, k) = lines.keyed("k")?;
            KernelSpec::DiscreteIdentity {
                k: k.parse().map_err(|e| Error::Parse {
                    line,
                    message: format!("bad k: {e}"),
                })?,
            }
        }
        "gaussian" => {
            let sigma = lines.f64_value("sigma")?;
            let (line, n) = lines.keyed("normalized")?;
            KernelSpec::Gaussian {
                sigma,
                normalized: n.parse().map_err(|e| Error::Parse {
                    line,
                    message: format!("bad flag: {e}"),
                })?,
            }
        }
        "deep_o" => KernelSpec::DeepO {
            log_sigma: lines.f64_value("log_sigma")?,
        },
        "deep_g" => {
            let log_sigma = lines.f64_value("log_sigma")?;
            KernelSpec::DeepG {
                phi: read_net(&mut lines, "phi")?,
                log_sigma,
            }
        }
        "deep_m" => {
            let log_sigma = lines.f64_value("log_sigma")?;
            let log_sigma0 = lines.f64_value("log_sigma0")?;
            let logit_tau = lines.f64_value("logit_tau")?;
            let phi = read_net(&mut lines, "phi")?;
            let phi_prime = read_net(&mut lines, "phi_prime")?;
            KernelSpec::DeepM {
                phi,
                phi_prime,
                log_sigma,
                log_sigma0,
                logit_tau,
            }
        }
        other => {
            return Err(Error::Parse {
                line,
                message: format!("unknown kernel type {other:?}"),
            })
        }
    };
    kernel.validate()?;
    Ok(kernel)
}
