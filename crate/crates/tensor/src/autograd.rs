use std::collections::{HashMap, HashSet};

use crate::error::{Result, TensorError};
use crate::tensor::{Real, Tensor};

impl Tensor {
    /// Reverse-mode sweep from a scalar loss.
    ///
    /// Every leaf reachable through differentiable ops accumulates into its
    /// gradient slot; calling twice without `zero_grad` sums the results.
    pub fn backward(&self) -> Result<()> {
        if !self.shape().is_scalar() {
            return Err(TensorError::NotScalar(self.shape()));
        }
        if !self.requires_grad() {
            return Ok(());
        }

        let order = topo_order(self);
        let mut pending: HashMap<u64, Vec<Real>> = HashMap::new();
        pending.insert(self.id(), vec![1.0]);

        for t in order.iter().rev() {
            let Some(grad) = pending.remove(&t.id()) else { continue };
            match t.node() {
                None => t.accumulate_grad(&grad),
                Some(node) => {
                    let grads = node.op.backward(t, &grad, &node.parents);
                    debug_assert_eq!(grads.len(), node.parents.len(), "{}", node.op.name());
                    for (parent, g) in node.parents.iter().zip(grads) {
                        let Some(g) = g else { continue };
                        if !parent.requires_grad() {
                            continue;
                        }
                        debug_assert_eq!(g.len(), parent.numel(), "{}", node.op.name());
                        match pending.get_mut(&parent.id()) {
                            Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
                            None => {
                                pending.insert(parent.id(), g);
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

/// Post-order over the differentiable subgraph (parents before children).
fn topo_order(root: &Tensor) -> Vec<Tensor> {
    let mut order = Vec::new();
    let mut visited = HashSet::new();
    // (tensor, children already pushed)
    let mut stack = vec![(root.clone(), false)];
    while let Some((t, expanded)) = stack.pop() {
        if expanded {
            order.push(t);
            continue;
        }
        if !visited.insert(t.id()) {
            continue;
        }
        stack.push((t.clone(), true));
        if let Some(node) = t.node() {
            for p in &node.parents {
                if p.requires_grad() && !visited.contains(&p.id()) {
                    stack.push((p.clone(), false));
                }
            }
        }
    }
    order
}
