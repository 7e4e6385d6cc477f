//! Chisel selectors.
//!
//! Commands accept a chisel as a compact selector string instead of always
//! requiring a file: `universal`, `adjoint:a,b`, `centroid`,
//! `tucker:a[,b,…]`, or `@path` for a chisel text file (rows of
//! whitespace-separated scalars). Axis numbers in selectors are 1-based, the
//! same convention as the tuple and CSV formats.

use chiselkit::chisel::Chisel;
use chiselkit::{Error, Result};

/// Resolve a selector against a tensor with `order` axes. Chisel files must
/// have exactly `order` columns.
pub fn resolve(selector: &str, order: usize) -> Result<Chisel> {
    let chisel = resolve_loose(selector, order)?;
    if chisel.ncols() != order {
        return Err(Error::arg(format!(
            "chisel has {} columns but the tensor has {order} axes",
            chisel.ncols()
        )));
    }
    Ok(chisel)
}

/// Resolve a selector when no tensor fixes the axis count: named selectors
/// use `default_order`, files keep their own column count.
pub fn resolve_loose(selector: &str, default_order: usize) -> Result<Chisel> {
    if let Some(path) = selector.strip_prefix('@') {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::arg(format!("cannot read chisel file {path}: {e}")))?;
        return Chisel::parse_text(&text);
    }
    let (name, args) = match selector.split_once(':') {
        Some((name, args)) => (name, Some(args)),
        None => (selector, None),
    };
    match (name, args) {
        ("universal", None) => Chisel::universal(default_order),
        ("centroid", None) => {
            if default_order != 3 {
                return Err(Error::arg(format!(
                    "the centroid chisel needs a 3-way tensor, got {default_order} axes"
                )));
            }
            Ok(Chisel::centroid3())
        }
        ("adjoint", Some(args)) => {
            let axes = parse_axes(args, default_order)?;
            if axes.len() != 2 {
                return Err(Error::arg("adjoint takes exactly two axes, e.g. adjoint:1,2"));
            }
            Chisel::adjoint(default_order, axes[0], axes[1])
        }
        ("tucker", Some(args)) => {
            let axes = parse_axes(args, default_order)?;
            Chisel::tucker(&axes, default_order)
        }
        _ => Err(Error::arg(format!(
            "unknown chisel selector {selector:?}; expected universal, adjoint:a,b, centroid, \
             tucker:a[,b,…], or @file"
        ))),
    }
}

/// Parse comma-separated 1-based axis numbers into 0-based indices, bounds
/// checked against `order`.
fn parse_axes(args: &str, order: usize) -> Result<Vec<usize>> {
    let mut axes = Vec::new();
    for tok in args.split(',') {
        let n: usize = tok
            .trim()
            .parse()
            .map_err(|_| Error::arg(format!("bad axis number {tok:?} in chisel selector")))?;
        if n == 0 {
            return Err(Error::arg("chisel selector axes are 1-based; found 0"));
        }
        if n > order {
            return Err(Error::arg(format!("axis {n} is out of range for a {order}-way tensor")));
        }
        axes.push(n - 1);
    }
    Ok(axes)
}
