//! Reverse-mode differentiation over dense matrices, just large enough for
//! the convolutions in this crate.

use std::sync::Arc;

use nalgebra::DMatrix;

/// Row-sparse linear map: `out[dst] += coef * in[src]`.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Sparse {
    pub out_rows: usize,
    pub in_rows: usize,
    pub entries: Vec<(usize, usize, f64)>,
}

impl Sparse {
    pub fn new(out_rows: usize, in_rows: usize, entries: Vec<(usize, usize, f64)>) -> Self {
        debug_assert!(entries.iter().all(|&(d, s, _)| d < out_rows && s < in_rows));
        Sparse {
            out_rows,
            in_rows,
            entries,
        }
    }

    fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.out_rows, x.ncols());
        for c in 0..x.ncols() {
            let src = x.column(c);
            let mut dst = out.column_mut(c);
            for &(d, s, w) in &self.entries {
                dst[d] += w * src[s];
            }
        }
        out
    }

    fn apply_transpose(&self, g: &DMatrix<f64>, acc: &mut DMatrix<f64>) {
        for c in 0..g.ncols() {
            let src = g.column(c);
            let mut dst = acc.column_mut(c);
            for &(d, s, w) in &self.entries {
                dst[s] += w * src[d];
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Var(usize);

enum Op {
    Input,
    Param(usize),
    MatMul(Var, Var),
    AddRow(Var, Var),
    Add(Var, Var),
    Relu(Var),
    Propagate(Var, Arc<Sparse>),
    Mask(Var, DMatrix<f64>),
}

struct Node {
    value: DMatrix<f64>,
    op: Op,
    needs_grad: bool,
}

#[derive(Default)]
pub(crate) struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, value: DMatrix<f64>, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn value(&self, v: Var) -> &DMatrix<f64> {
        &self.nodes[v.0].value
    }

    pub fn input(&mut self, x: DMatrix<f64>) -> Var {
        self.push(x, Op::Input, false)
    }

    pub fn param(&mut self, index: usize, x: DMatrix<f64>) -> Var {
        self.push(x, Op::Param(index), true)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) * self.value(b);
        let g = self.needs(a) || self.needs(b);
        self.push(v, Op::MatMul(a, b), g)
    }

    /// `a + 1 * row`, broadcasting a `1 x d` row over every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let r = self.value(row).row(0).clone_owned();
        let mut v = self.value(a).clone();
        for mut x in v.row_iter_mut() {
            x += &r;
        }
        let g = self.needs(a) || self.needs(row);
        self.push(v, Op::AddRow(a, row), g)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) + self.value(b);
        let g = self.needs(a) || self.needs(b);
        self.push(v, Op::Add(a, b), g)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| x.max(0.0));
        let g = self.needs(a);
        self.push(v, Op::Relu(a), g)
    }

    pub fn propagate(&mut self, a: Var, op: &Arc<Sparse>) -> Var {
        let v = op.apply(self.value(a));
        let g = self.needs(a);
        self.push(v, Op::Propagate(a, Arc::clone(op)), g)
    }

    /// Elementwise product with a constant.
    pub fn mask(&mut self, a: Var, m: DMatrix<f64>) -> Var {
        let v = self.value(a).component_mul(&m);
        let g = self.needs(a);
        self.push(v, Op::Mask(a, m), g)
    }

    /// Gradients of `<seed, out>` with respect to every parameter, indexed by
    /// parameter number. Parameters the output does not depend on get zeros.
    pub fn backward(&self, out: Var, seed: DMatrix<f64>, num_params: usize) -> Vec<Option<DMatrix<f64>>> {
        let mut grads: Vec<Option<DMatrix<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[out.0] = Some(seed);
        let mut result = vec![None; num_params];
        for i in (0..=out.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            match &node.op {
                Op::Input => {}
                Op::Param(p) => result[*p] = Some(g),
                Op::MatMul(a, b) => {
                    if self.needs(*a) {
                        let ga = &g * self.value(*b).transpose();
                        accumulate(&mut grads, *a, ga);
                    }
                    if self.needs(*b) {
                        let gb = self.value(*a).transpose() * &g;
                        accumulate(&mut grads, *b, gb);
                    }
                }
                Op::AddRow(a, row) => {
                    if self.needs(*row) {
                        let s = DMatrix::from_fn(1, g.ncols(), |_, c| g.column(c).sum());
                        accumulate(&mut grads, *row, s);
                    }
                    if self.needs(*a) {
                        accumulate(&mut grads, *a, g);
                    }
                }
                Op::Add(a, b) => {
                    if self.needs(*b) {
                        accumulate(&mut grads, *b, g.clone());
                    }
                    if self.needs(*a) {
                        accumulate(&mut grads, *a, g);
                    }
                }
                Op::Relu(a) => {
                    let x = self.value(*a);
                    let ga = g.zip_map(x, |gi, xi| if xi > 0.0 { gi } else { 0.0 });
                    accumulate(&mut grads, *a, ga);
                }
                Op::Propagate(a, op) => {
                    let mut ga = DMatrix::zeros(op.in_rows, g.ncols());
                    op.apply_transpose(&g, &mut ga);
                    accumulate(&mut grads, *a, ga);
                }
                Op::Mask(a, m) => accumulate(&mut grads, *a, g.component_mul(m)),
            }
        }
        result
    }
}

fn accumulate(grads: &mut [Option<DMatrix<f64>>], v: Var, g: DMatrix<f64>) {
    match &mut grads[v.0] {
        Some(acc) => *acc += g,
        slot => *slot = Some(g),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_scalar() {
        let mut t = Tape::new();
        let x = t.input(DMatrix::from_element(1, 1, 3.0));
        let w = t.param(0, DMatrix::from_element(1, 1, 2.0));
        let y = t.matmul(x, w);
        let g = t.backward(y, DMatrix::from_element(1, 1, 1.0), 1);
        assert_eq!(g[0].as_ref().unwrap()[(0, 0)], 3.0);
    }

    #[test]
    fn propagate_is_linear_map() {
        let op = Arc::new(Sparse::new(2, 3, vec![(0, 1, 2.0), (1, 0, 1.0), (1, 2, -1.0)]));
        let mut t = Tape::new();
        let x = t.param(0, DMatrix::from_row_slice(3, 1, &[1.0, 2.0, 3.0]));
        let y = t.propagate(x, &op);
        assert_eq!(t.value(y).as_slice(), &[4.0, -2.0]);
        let g = t.backward(y, DMatrix::from_row_slice(2, 1, &[1.0, 10.0]), 1);
        assert_eq!(g[0].as_ref().unwrap().as_slice(), &[10.0, 2.0, -10.0]);
    }

    #[test]
    fn shared_input_accumulates() {
        let mut t = Tape::new();
        let a = t.param(0, DMatrix::from_element(1, 2, 1.5));
        let b = t.relu(a);
        let c = t.add(a, b);
        let g = t.backward(c, DMatrix::from_element(1, 2, 1.0), 1);
        assert_eq!(g[0].as_ref().unwrap().as_slice(), &[2.0, 2.0]);
    }
}
