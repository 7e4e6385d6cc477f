//! `chiselkit classify` — name a chisel's equivalence class.
//!
//! Two chisels carve the same family of patterns when they differ by an
//! invertible row mix, a column permutation, and nonzero column scales.
//! For three columns there are exactly seven classes; this prints the class
//! name followed by its normal form. Chisels with another column count have
//! no class names, so only the normalized matrix is printed.

use clap::Args;

use chiselkit::Result;

use crate::selector;

#[derive(Args, Debug)]
pub struct ClassifyArgs {
    /// Chisel selector: universal | adjoint:a,b | centroid | tucker:a[,b,…]
    /// | @file (axes 1-based; files keep their own column count).
    #[arg(long)]
    chisel: String,

    /// Axis count for named selectors.
    #[arg(long, default_value_t = 3)]
    order: usize,
}

pub fn run(args: &ClassifyArgs) -> Result<u8> {
    let c = selector::resolve_loose(&args.chisel, args.order)?;
    if c.ncols() == 3 {
        let class = c.classify3()?;
        println!("{}", class.kind);
        let normal = class.kind.normal_form();
        for i in 0..normal.nrows() {
            let row: Vec<String> = (0..3).map(|j| format!("{}", normal[(i, j)])).collect();
            println!("{}", row.join(" "));
        }
    } else {
        let (normal, _transcript) = c.normalize();
        print!("{}", normal.to_text());
    }
    Ok(0)
}
