use super::{Graph, NodeId, Op};
use crate::error::{Error, Result};

/// Incoming adjoint contribution: `adjoint · factor`, with `None` meaning factor 1.
type Contribution = (u32, Option<u32>);

impl Graph {
    /// Reverse-mode gradient of `root` with respect to `wrt`.
    ///
    /// Returns one derivative node per entry of `wrt`. `wrt` may hold leaves
    /// or intermediate nodes; the sweep only visits nodes that lie between a
    /// `wrt` node and `root`.
    pub fn gradient(&mut self, root: NodeId, wrt: &[NodeId]) -> Result<Vec<NodeId>> {
        self.check(root)?;
        for &w in wrt {
            self.check(w)?;
        }
        let r = root.index();
        let lo = match wrt.iter().map(|w| w.index()).filter(|&i| i <= r).min() {
            Some(lo) => lo,
            None => {
                let zero = self.constant(0.0);
                return Ok(vec![zero; wrt.len()]);
            }
        };
        let span = r + 1 - lo;

        // dep[i]: node lo+i depends on some wrt node.
        let mut dep = vec![false; span];
        for &w in wrt {
            if w.index() <= r {
                dep[w.index() - lo] = true;
            }
        }
        for i in lo..=r {
            if !dep[i - lo] {
                dep[i - lo] = self
                    .parent_indices(i)
                    .iter()
                    .any(|&p| (p as usize) >= lo && dep[p as usize - lo]);
            }
        }

        let mut contrib: Vec<Vec<Contribution>> = vec![Vec::new(); span];
        let mut adjoint: Vec<Option<u32>> = vec![None; span];
        let one = self.one();
        if dep[r - lo] {
            contrib[r - lo].push((one.index, None));
        }
        let mut minus_one: Option<u32> = None;

        for i in (lo..=r).rev() {
            let incoming = std::mem::take(&mut contrib[i - lo]);
            if incoming.is_empty() {
                continue;
            }
            let adj = self.combine(incoming, one.index);
            adjoint[i - lo] = Some(adj);

            let (start, len) = self.spans[i];
            let op = self.ops[i];
            for k in 0..len as usize {
                let p = self.edges[start as usize + k] as usize;
                if p < lo || !dep[p - lo] {
                    continue;
                }
                let factor = match op {
                    Op::Const | Op::Input | Op::Step => continue,
                    Op::Add | Op::Sum => None,
                    Op::Mul => Some(self.edges[start as usize + (1 - k)]),
                    Op::Neg => {
                        let m = *minus_one.get_or_insert_with(|| self.constant(-1.0).index);
                        Some(m)
                    }
                    Op::Exp => Some(i as u32),
                    Op::Ln => Some(self.powc(self.handle(p), -1.0).index),
                    Op::Tanh => {
                        // 1 - y²
                        let y = self.handle(i);
                        let y2 = self.mul(y, y);
                        let ny2 = self.neg(y2);
                        Some(self.add(one, ny2).index)
                    }
                    Op::Relu => Some(self.step(self.handle(p)).index),
                    Op::Max => {
                        let a = self.handle(self.edges[start as usize + k] as usize);
                        let b = self.handle(self.edges[start as usize + (1 - k)] as usize);
                        let nb = self.neg(b);
                        let diff = self.add(a, nb);
                        Some(self.step(diff).index)
                    }
                    Op::PowConst(e) => {
                        if e == 1.0 {
                            None
                        } else if e == 2.0 {
                            let two = self.constant(2.0);
                            Some(self.mul(two, self.handle(p)).index)
                        } else {
                            let c = self.constant(e);
                            let pw = self.powc(self.handle(p), e - 1.0);
                            Some(self.mul(c, pw).index)
                        }
                    }
                    Op::Dot => {
                        let n = len as usize / 2;
                        let other = if k < n { k + n } else { k - n };
                        Some(self.edges[start as usize + other])
                    }
                };
                contrib[p - lo].push((adj, factor));
            }
        }

        let mut zero: Option<NodeId> = None;
        let mut out = Vec::with_capacity(wrt.len());
        for &w in wrt {
            let a = if w.index() <= r { adjoint[w.index() - lo] } else { None };
            out.push(match a {
                Some(a) => self.handle(a as usize),
                None => *zero.get_or_insert_with(|| self.constant(0.0)),
            });
        }
        Ok(out)
    }

    /// Sums adjoint contributions into one node: plain terms go into a `Sum`,
    /// factored terms into a single `Dot`.
    fn combine(&mut self, incoming: Vec<Contribution>, one: u32) -> u32 {
        if incoming.len() == 1 {
            match incoming[0] {
                (a, None) => return a,
                (a, Some(f)) if f == one => return a,
                (a, Some(f)) if a == one => return f,
                _ => {}
            }
        }
        let mut plain: Vec<NodeId> = Vec::new();
        let mut adjs: Vec<NodeId> = Vec::new();
        let mut facs: Vec<NodeId> = Vec::new();
        for (a, f) in incoming {
            match f {
                None => plain.push(self.handle(a as usize)),
                Some(f) if f == one => plain.push(self.handle(a as usize)),
                Some(f) if a == one => plain.push(self.handle(f as usize)),
                Some(f) => {
                    adjs.push(self.handle(a as usize));
                    facs.push(self.handle(f as usize));
                }
            }
        }
        match adjs.len() {
            0 => {}
            1 => plain.push(self.mul(adjs[0], facs[0])),
            _ => plain.push(self.dot(&adjs, &facs)),
        }
        self.sum(&plain).index
    }
}

/// `H·v` as nodes, given the gradient nodes `grad` of a loss w.r.t. `z`.
pub fn hvp_nodes(g: &mut Graph, grad: &[NodeId], z: &[NodeId], v: &[f64]) -> Result<Vec<NodeId>> {
    if grad.len() != z.len() {
        return Err(Error::Shape {
            expected: z.len(),
            got: grad.len(),
        });
    }
    if v.len() != z.len() {
        return Err(Error::Shape {
            expected: z.len(),
            got: v.len(),
        });
    }
    let s = g.dot_const(grad, v);
    g.gradient(s, z)
}

/// Hessian-vector product `∇z(∇zL · v)` of a loss built by `loss` at `z`.
pub fn hvp<F>(loss: &F, z: &[f64], v: &[f64]) -> Result<Vec<f64>>
where
    F: Fn(&mut Graph, &[NodeId]) -> NodeId,
{
    if v.len() != z.len() {
        return Err(Error::Shape {
            expected: z.len(),
            got: v.len(),
        });
    }
    let mut g = Graph::new();
    let zn: Vec<NodeId> = z.iter().map(|&x| g.variable(x)).collect();
    let l = loss(&mut g, &zn);
    let grad = g.gradient(l, &zn)?;
    let hv = hvp_nodes(&mut g, &grad, &zn, v)?;
    Ok(g.values(&hv))
}

/// Central-difference gradient `(f(z + h e_i) - f(z - h e_i)) / 2h`.
pub fn finite_diff_gradient<F>(f: F, z: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    if !(h > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "finite-difference step must be > 0, got {h}"
        )));
    }
    let mut probe = z.to_vec();
    let mut out = Vec::with_capacity(z.len());
    for i in 0..z.len() {
        probe[i] = z[i] + h;
        let up = f(&probe)?;
        probe[i] = z[i] - h;
        let down = f(&probe)?;
        probe[i] = z[i];
        out.push((up - down) / (2.0 * h));
    }
    Ok(out)
}
