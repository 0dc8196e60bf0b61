//! Reverse-mode differentiation over vector-valued nodes.
//!
//! Every node holds a `Vec<f64>`; scalars are vectors of length one. Nodes
//! are appended in evaluation order, so the node list is already
//! topologically sorted and one backward sweep from the loss fills the
//! adjoints of every node it depends on.
//!
//! The same arithmetic is available without recording through [`Eager`];
//! code written against [`Backend`] runs on either.

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    AddConst(Var),
    ScaleConst(Var, f64),
    /// Length-one `s` times vector `x`.
    Scale(Var, Var),
    Ln(Var),
    Exp(Var),
    Tanh(Var),
    Sigmoid(Var),
    Sqrt(Var),
    MinConst(Var, f64),
    MaxConst(Var, f64),
    /// Row-major `rows × cols` matrix times vector.
    MatVec {
        mat: Var,
        rows: usize,
        cols: usize,
        x: Var,
    },
    Dot(Var, Var),
    Sum(Var),
    Concat(Vec<Var>),
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    value: Vec<f64>,
}

/// Vector arithmetic shared by the recording tape and plain evaluation.
pub trait Backend {
    type V: Clone;

    fn constant(&mut self, v: Vec<f64>) -> Self::V;
    fn value<'a>(&'a self, v: &'a Self::V) -> &'a [f64];

    fn add(&mut self, a: &Self::V, b: &Self::V) -> Self::V;
    fn sub(&mut self, a: &Self::V, b: &Self::V) -> Self::V;
    fn mul(&mut self, a: &Self::V, b: &Self::V) -> Self::V;
    fn div(&mut self, a: &Self::V, b: &Self::V) -> Self::V;
    fn add_const(&mut self, a: &Self::V, c: f64) -> Self::V;
    fn scale_const(&mut self, a: &Self::V, c: f64) -> Self::V;
    fn scale(&mut self, s: &Self::V, x: &Self::V) -> Self::V;
    fn ln(&mut self, a: &Self::V) -> Self::V;
    fn exp(&mut self, a: &Self::V) -> Self::V;
    fn tanh(&mut self, a: &Self::V) -> Self::V;
    fn sigmoid(&mut self, a: &Self::V) -> Self::V;
    fn sqrt(&mut self, a: &Self::V) -> Self::V;
    fn min_const(&mut self, a: &Self::V, c: f64) -> Self::V;
    fn max_const(&mut self, a: &Self::V, c: f64) -> Self::V;
    fn matvec(&mut self, mat: &Self::V, rows: usize, cols: usize, x: &Self::V) -> Self::V;
    fn dot(&mut self, a: &Self::V, b: &Self::V) -> Self::V;
    fn sum(&mut self, a: &Self::V) -> Self::V;
    fn concat(&mut self, parts: &[Self::V]) -> Self::V;
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn zip_map(a: &[f64], b: &[f64], f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    assert_eq!(a.len(), b.len(), "operand lengths differ");
    a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect()
}

fn matvec_values(m: &[f64], rows: usize, cols: usize, x: &[f64]) -> Vec<f64> {
    assert_eq!(m.len(), rows * cols, "matrix shape");
    assert_eq!(x.len(), cols, "matvec operand length");
    m.chunks_exact(cols)
        .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
        .collect()
}

fn dot_values(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "operand lengths differ");
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Plain evaluation, nothing recorded.
#[derive(Debug, Default, Clone, Copy)]
pub struct Eager;

impl Backend for Eager {
    type V = Vec<f64>;

    fn constant(&mut self, v: Vec<f64>) -> Vec<f64> {
        v
    }

    fn value<'a>(&'a self, v: &'a Vec<f64>) -> &'a [f64] {
        v
    }

    fn add(&mut self, a: &Vec<f64>, b: &Vec<f64>) -> Vec<f64> {
        zip_map(a, b, |x, y| x + y)
    }

    fn sub(&mut self, a: &Vec<f64>, b: &Vec<f64>) -> Vec<f64> {
        zip_map(a, b, |x, y| x - y)
    }

    fn mul(&mut self, a: &Vec<f64>, b: &Vec<f64>) -> Vec<f64> {
        zip_map(a, b, |x, y| x * y)
    }

    fn div(&mut self, a: &Vec<f64>, b: &Vec<f64>) -> Vec<f64> {
        zip_map(a, b, |x, y| x / y)
    }

    fn add_const(&mut self, a: &Vec<f64>, c: f64) -> Vec<f64> {
        a.iter().map(|x| x + c).collect()
    }

    fn scale_const(&mut self, a: &Vec<f64>, c: f64) -> Vec<f64> {
        a.iter().map(|x| x * c).collect()
    }

    fn scale(&mut self, s: &Vec<f64>, x: &Vec<f64>) -> Vec<f64> {
        assert_eq!(s.len(), 1, "scale factor must be a scalar");
        x.iter().map(|v| v * s[0]).collect()
    }

    fn ln(&mut self, a: &Vec<f64>) -> Vec<f64> {
        a.iter().map(|x| x.ln()).collect()
    }

    fn exp(&mut self, a: &Vec<f64>) -> Vec<f64> {
        a.iter().map(|x| x.exp()).collect()
    }

    fn tanh(&mut self, a: &Vec<f64>) -> Vec<f64> {
        a.iter().map(|x| x.tanh()).collect()
    }

    fn sigmoid(&mut self, a: &Vec<f64>) -> Vec<f64> {
        a.iter().map(|&x| sigmoid(x)).collect()
    }

    fn sqrt(&mut self, a: &Vec<f64>) -> Vec<f64> {
        a.iter().map(|x| x.sqrt()).collect()
    }

    fn min_const(&mut self, a: &Vec<f64>, c: f64) -> Vec<f64> {
        a.iter().map(|&x| if x <= c { x } else { c }).collect()
    }

    fn max_const(&mut self, a: &Vec<f64>, c: f64) -> Vec<f64> {
        a.iter().map(|&x| if x >= c { x } else { c }).collect()
    }

    fn matvec(&mut self, mat: &Vec<f64>, rows: usize, cols: usize, x: &Vec<f64>) -> Vec<f64> {
        matvec_values(mat, rows, cols, x)
    }

    fn dot(&mut self, a: &Vec<f64>, b: &Vec<f64>) -> Vec<f64> {
        vec![dot_values(a, b)]
    }

    fn sum(&mut self, a: &Vec<f64>) -> Vec<f64> {
        vec![a.iter().sum()]
    }

    fn concat(&mut self, parts: &[Vec<f64>]) -> Vec<f64> {
        parts.concat()
    }
}

/// Records every operation for a later reverse sweep.
#[derive(Debug, Default, Clone)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// An input whose adjoint will be reported by [`Tape::backward`].
    pub fn leaf(&mut self, value: Vec<f64>) -> Var {
        self.push(Op::Leaf, value)
    }

    pub fn val(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    fn push(&mut self, op: Op, value: Vec<f64>) -> Var {
        self.nodes.push(Node { op, value });
        Var(self.nodes.len() - 1)
    }

    /// Adjoints of every node with respect to the scalar node `output`.
    pub fn backward(&self, output: Var) -> Gradients {
        assert_eq!(self.val(output).len(), 1, "backward needs a scalar output");
        let mut adj: Vec<Option<Vec<f64>>> = vec![None; output.0 + 1];
        adj[output.0] = Some(vec![1.0]);

        for idx in (0..=output.0).rev() {
            let Some(g) = adj[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf => {}
                Op::Add(a, b) => {
                    accumulate(&mut adj, *a, &g);
                    accumulate(&mut adj, *b, &g);
                }
                Op::Sub(a, b) => {
                    accumulate(&mut adj, *a, &g);
                    let neg: Vec<f64> = g.iter().map(|x| -x).collect();
                    accumulate(&mut adj, *b, &neg);
                }
                Op::Mul(a, b) => {
                    let (va, vb) = (self.val(*a), self.val(*b));
                    accumulate(&mut adj, *a, &zip_map(&g, vb, |g, y| g * y));
                    accumulate(&mut adj, *b, &zip_map(&g, va, |g, x| g * x));
                }
                Op::Div(a, b) => {
                    let vb = self.val(*b);
                    let out = &node.value;
                    accumulate(&mut adj, *a, &zip_map(&g, vb, |g, y| g / y));
                    let gb: Vec<f64> = g
                        .iter()
                        .zip(out)
                        .zip(vb)
                        .map(|((g, o), y)| -g * o / y)
                        .collect();
                    accumulate(&mut adj, *b, &gb);
                }
                Op::AddConst(a) => accumulate(&mut adj, *a, &g),
                Op::ScaleConst(a, c) => {
                    let ga: Vec<f64> = g.iter().map(|x| x * c).collect();
                    accumulate(&mut adj, *a, &ga);
                }
                Op::Scale(s, x) => {
                    let (vs, vx) = (self.val(*s)[0], self.val(*x));
                    accumulate(&mut adj, *s, &[dot_values(&g, vx)]);
                    let gx: Vec<f64> = g.iter().map(|v| v * vs).collect();
                    accumulate(&mut adj, *x, &gx);
                }
                Op::Ln(a) => {
                    let ga = zip_map(&g, self.val(*a), |g, x| g / x);
                    accumulate(&mut adj, *a, &ga);
                }
                Op::Exp(a) | Op::Sqrt(a) => {
                    let is_exp = matches!(node.op, Op::Exp(_));
                    let ga = zip_map(&g, &node.value, |g, y| if is_exp { g * y } else { g * 0.5 / y });
                    accumulate(&mut adj, *a, &ga);
                }
                Op::Tanh(a) => {
                    let ga = zip_map(&g, &node.value, |g, y| g * (1.0 - y * y));
                    accumulate(&mut adj, *a, &ga);
                }
                Op::Sigmoid(a) => {
                    let ga = zip_map(&g, &node.value, |g, y| g * y * (1.0 - y));
                    accumulate(&mut adj, *a, &ga);
                }
                Op::MinConst(a, c) => {
                    let c = *c;
                    let ga = zip_map(&g, self.val(*a), |g, x| if x <= c { g } else { 0.0 });
                    accumulate(&mut adj, *a, &ga);
                }
                Op::MaxConst(a, c) => {
                    let c = *c;
                    let ga = zip_map(&g, self.val(*a), |g, x| if x >= c { g } else { 0.0 });
                    accumulate(&mut adj, *a, &ga);
                }
                Op::MatVec { mat, rows, cols, x } => {
                    let (m, vx) = (self.val(*mat), self.val(*x));
                    let mut gm = vec![0.0; rows * cols];
                    let mut gx = vec![0.0; *cols];
                    for (r, &gr) in g.iter().enumerate() {
                        if gr == 0.0 {
                            continue;
                        }
                        let row = &m[r * cols..(r + 1) * cols];
                        let grow = &mut gm[r * cols..(r + 1) * cols];
                        for c in 0..*cols {
                            grow[c] = gr * vx[c];
                            gx[c] += gr * row[c];
                        }
                    }
                    accumulate_owned(&mut adj, *mat, gm);
                    accumulate_owned(&mut adj, *x, gx);
                }
                Op::Dot(a, b) => {
                    let (va, vb) = (self.val(*a), self.val(*b));
                    let ga: Vec<f64> = vb.iter().map(|y| g[0] * y).collect();
                    let gb: Vec<f64> = va.iter().map(|x| g[0] * x).collect();
                    accumulate_owned(&mut adj, *a, ga);
                    accumulate_owned(&mut adj, *b, gb);
                }
                Op::Sum(a) => {
                    let n = self.val(*a).len();
                    accumulate_owned(&mut adj, *a, vec![g[0]; n]);
                }
                Op::Concat(parts) => {
                    let mut offset = 0;
                    for p in parts {
                        let n = self.val(*p).len();
                        accumulate(&mut adj, *p, &g[offset..offset + n]);
                        offset += n;
                    }
                }
            }
            if matches!(node.op, Op::Leaf) {
                adj[idx] = Some(g);
            }
        }
        Gradients { adjoints: adj }
    }
}

fn accumulate(adj: &mut [Option<Vec<f64>>], target: Var, g: &[f64]) {
    match &mut adj[target.0] {
        Some(existing) => {
            for (e, v) in existing.iter_mut().zip(g) {
                *e += v;
            }
        }
        slot @ None => *slot = Some(g.to_vec()),
    }
}

fn accumulate_owned(adj: &mut [Option<Vec<f64>>], target: Var, g: Vec<f64>) {
    match &mut adj[target.0] {
        Some(existing) => {
            for (e, v) in existing.iter_mut().zip(&g) {
                *e += v;
            }
        }
        slot @ None => *slot = Some(g),
    }
}

/// Adjoints of leaves after a backward sweep.
#[derive(Debug, Clone)]
pub struct Gradients {
    adjoints: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    /// Adjoint of a leaf; `None` if the output does not depend on it.
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        self.adjoints.get(v.0).and_then(|a| a.as_deref())
    }

    /// Adjoint of a leaf of length `len`, zero-filled if unreachable.
    pub fn wrt(&self, v: Var, len: usize) -> Vec<f64> {
        self.get(v).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; len])
    }
}

impl Backend for Tape {
    type V = Var;

    fn constant(&mut self, v: Vec<f64>) -> Var {
        self.leaf(v)
    }

    fn value<'a>(&'a self, v: &'a Var) -> &'a [f64] {
        self.val(*v)
    }

    fn add(&mut self, a: &Var, b: &Var) -> Var {
        let v = zip_map(self.val(*a), self.val(*b), |x, y| x + y);
        self.push(Op::Add(*a, *b), v)
    }

    fn sub(&mut self, a: &Var, b: &Var) -> Var {
        let v = zip_map(self.val(*a), self.val(*b), |x, y| x - y);
        self.push(Op::Sub(*a, *b), v)
    }

    fn mul(&mut self, a: &Var, b: &Var) -> Var {
        let v = zip_map(self.val(*a), self.val(*b), |x, y| x * y);
        self.push(Op::Mul(*a, *b), v)
    }

    fn div(&mut self, a: &Var, b: &Var) -> Var {
        let v = zip_map(self.val(*a), self.val(*b), |x, y| x / y);
        self.push(Op::Div(*a, *b), v)
    }

    fn add_const(&mut self, a: &Var, c: f64) -> Var {
        let v = self.val(*a).iter().map(|x| x + c).collect();
        self.push(Op::AddConst(*a), v)
    }

    fn scale_const(&mut self, a: &Var, c: f64) -> Var {
        let v = self.val(*a).iter().map(|x| x * c).collect();
        self.push(Op::ScaleConst(*a, c), v)
    }

    fn scale(&mut self, s: &Var, x: &Var) -> Var {
        assert_eq!(self.val(*s).len(), 1, "scale factor must be a scalar");
        let f = self.val(*s)[0];
        let v = self.val(*x).iter().map(|v| v * f).collect();
        self.push(Op::Scale(*s, *x), v)
    }

    fn ln(&mut self, a: &Var) -> Var {
        let v = self.val(*a).iter().map(|x| x.ln()).collect();
        self.push(Op::Ln(*a), v)
    }

    fn exp(&mut self, a: &Var) -> Var {
        let v = self.val(*a).iter().map(|x| x.exp()).collect();
        self.push(Op::Exp(*a), v)
    }

    fn tanh(&mut self, a: &Var) -> Var {
        let v = self.val(*a).iter().map(|x| x.tanh()).collect();
        self.push(Op::Tanh(*a), v)
    }

    fn sigmoid(&mut self, a: &Var) -> Var {
        let v = self.val(*a).iter().map(|&x| sigmoid(x)).collect();
        self.push(Op::Sigmoid(*a), v)
    }

    fn sqrt(&mut self, a: &Var) -> Var {
        let v = self.val(*a).iter().map(|x| x.sqrt()).collect();
        self.push(Op::Sqrt(*a), v)
    }

    fn min_const(&mut self, a: &Var, c: f64) -> Var {
        let v = self.val(*a).iter().map(|&x| if x <= c { x } else { c }).collect();
        self.push(Op::MinConst(*a, c), v)
    }

    fn max_const(&mut self, a: &Var, c: f64) -> Var {
        let v = self.val(*a).iter().map(|&x| if x >= c { x } else { c }).collect();
        self.push(Op::MaxConst(*a, c), v)
    }

    fn matvec(&mut self, mat: &Var, rows: usize, cols: usize, x: &Var) -> Var {
        let v = matvec_values(self.val(*mat), rows, cols, self.val(*x));
        self.push(
            Op::MatVec {
                mat: *mat,
                rows,
                cols,
                x: *x,
            },
            v,
        )
    }

    fn dot(&mut self, a: &Var, b: &Var) -> Var {
        let v = vec![dot_values(self.val(*a), self.val(*b))];
        self.push(Op::Dot(*a, *b), v)
    }

    fn sum(&mut self, a: &Var) -> Var {
        let v = vec![self.val(*a).iter().sum()];
        self.push(Op::Sum(*a), v)
    }

    fn concat(&mut self, parts: &[Var]) -> Var {
        let v = parts.iter().flat_map(|p| self.val(*p).iter().copied()).collect();
        self.push(Op::Concat(parts.to_vec()), v)
    }
}
