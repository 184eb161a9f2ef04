use finsler_core::{functionals::*, grid::TorusGrid, C64};
use std::sync::Arc;
fn main() {
    let grid = Arc::new(TorusGrid::new(2, 8, vec![1.0; 4]).unwrap());
    let len = grid.len();
    let mut coeff = vec![C64::new(0.0, 0.0); len * 4];
    for idx in 0..len {
        coeff[idx * 4] = C64::new(1.0, 0.0);
        coeff[idx * 4 + 3] = C64::new(1.0, 0.0);
    }
    let form = HermitianQuadForm { grid: grid.clone(), weight: vec![1.0; len], coeff, scale: 1.0 };
    match rayleigh_lambda1(&form, 200, 7) {
        Ok((l, _)) => println!("lambda = {l}"),
        Err(e) => println!("error: {e}"),
    }
}
