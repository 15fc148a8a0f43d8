//! Named parameter collections and their binding into a graph.

use std::cell::RefCell;
use std::collections::{BTreeMap, HashMap};

use crate::autodiff::layers::{is_buffer, update_running};
use crate::autodiff::{BatchStats, Graph, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Gradient of a loss for each trainable parameter, keyed by name.
pub type GradMap = BTreeMap<String, Tensor>;

/// Ordered named tensors of one network; order is fixed by the network spec.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    entries: Vec<(String, Tensor)>,
    pub init_seed: u64,
}

impl ModelParams {
    pub fn new(entries: Vec<(String, Tensor)>, init_seed: u64) -> Result<Self> {
        let mut seen = std::collections::HashSet::new();
        for (name, _) in &entries {
            if !seen.insert(name.as_str()) {
                return Err(Error::contract(format!("duplicate parameter name {name}")));
            }
        }
        Ok(ModelParams { entries, init_seed })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(n, _)| n.as_str())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.entries
            .iter_mut()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
        self.entries.iter_mut().map(|(n, t)| (n.as_str(), t))
    }

    /// Number of trainable scalars (running statistics excluded).
    pub fn trainable_count(&self) -> usize {
        self.iter()
            .filter(|(n, _)| !is_buffer(n))
            .map(|(_, t)| t.len())
            .sum()
    }

    pub fn all_finite(&self) -> bool {
        self.entries.iter().all(|(_, t)| t.all_finite())
    }

    /// Push every tensor into `graph`; trainable ones become gradient leaves
    /// when `trainable` is set, everything else is a constant.
    pub fn bind<'g>(&self, graph: &'g Graph, trainable: bool) -> Bound<'g> {
        let mut index = HashMap::with_capacity(self.entries.len());
        let mut vars = Vec::with_capacity(self.entries.len());
        for (i, (name, t)) in self.entries.iter().enumerate() {
            let v = if trainable && !is_buffer(name) {
                graph.param(t.clone())
            } else {
                graph.constant(t.clone())
            };
            index.insert(name.clone(), i);
            vars.push((name.clone(), v));
        }
        Bound {
            index,
            vars,
            stats: RefCell::new(Vec::new()),
        }
    }

    /// Fold batch-norm statistics from a train-mode pass into the running buffers.
    pub fn apply_batch_stats(&mut self, updates: Vec<StatsUpdate>) -> Result<()> {
        for u in updates {
            let mut mean = self
                .get(&u.mean_name)
                .cloned()
                .ok_or_else(|| Error::contract(format!("no buffer {}", u.mean_name)))?;
            let mut var = self
                .get(&u.var_name)
                .cloned()
                .ok_or_else(|| Error::contract(format!("no buffer {}", u.var_name)))?;
            update_running(&mut mean, &mut var, &u.stats);
            *self.get_mut(&u.mean_name).expect("checked") = mean;
            *self.get_mut(&u.var_name).expect("checked") = var;
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct StatsUpdate {
    pub mean_name: String,
    pub var_name: String,
    pub stats: BatchStats,
}

/// [`ModelParams`] pushed into one graph.
pub struct Bound<'g> {
    index: HashMap<String, usize>,
    vars: Vec<(String, Var<'g>)>,
    stats: RefCell<Vec<StatsUpdate>>,
}

impl<'g> Bound<'g> {
    pub fn get(&self, name: &str) -> Result<Var<'g>> {
        self.index
            .get(name)
            .map(|&i| self.vars[i].1)
            .ok_or_else(|| Error::contract(format!("missing parameter {name}")))
    }

    pub(crate) fn record_stats(&self, mean_name: &str, var_name: &str, stats: BatchStats) {
        self.stats.borrow_mut().push(StatsUpdate {
            mean_name: mean_name.to_string(),
            var_name: var_name.to_string(),
            stats,
        });
    }

    /// Batch-norm statistics recorded by train-mode forward passes so far.
    pub fn take_stats(&self) -> Vec<StatsUpdate> {
        std::mem::take(&mut *self.stats.borrow_mut())
    }

    /// Gradients of `loss` for every bound trainable parameter.
    pub fn gradients(&self, graph: &'g Graph, loss: Var<'g>) -> Result<GradMap> {
        let trainable: Vec<&(String, Var<'g>)> =
            self.vars.iter().filter(|(n, _)| !is_buffer(n)).collect();
        let vars: Vec<Var<'g>> = trainable.iter().map(|(_, v)| *v).collect();
        let grads = graph.backward(loss, &vars)?;
        Ok(trainable
            .into_iter()
            .map(|(n, _)| n.clone())
            .zip(grads)
            .collect())
    }
}
