//! Named parameter storage and per-forward binding onto an autodiff tape.

use std::cell::RefCell;
use std::collections::HashMap;

use mcr_autodiff::{Tape, Var};
use ndarray::ArrayD;
use rand_chacha::ChaCha12Rng;

use crate::error::{Error, Result};
use crate::seeds;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Section {
    /// Trainable parameter (counted, receives gradients).
    Param,
    /// Persistent state that is not gradient-trained (EMA codebook state,
    /// batch-norm running statistics).
    Buffer,
}

struct Entry {
    name: String,
    section: Section,
    array: ArrayD<f64>,
}

/// Ordered, named tensor store for one network.
#[derive(Default)]
pub struct VarStore {
    entries: Vec<Entry>,
    index: HashMap<String, usize>,
}

impl VarStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: &str, section: Section, array: ArrayD<f64>) {
        assert!(
            !self.index.contains_key(name),
            "duplicate tensor name '{name}'"
        );
        self.index.insert(name.to_string(), self.entries.len());
        self.entries.push(Entry {
            name: name.to_string(),
            section,
            array,
        });
    }

    pub fn get(&self, name: &str) -> &ArrayD<f64> {
        let i = self.index[name];
        &self.entries[i].array
    }

    pub fn try_get(&self, name: &str) -> Option<&ArrayD<f64>> {
        self.index.get(name).map(|&i| &self.entries[i].array)
    }

    pub fn set(&mut self, name: &str, array: ArrayD<f64>) {
        let i = self.index[name];
        assert_eq!(
            self.entries[i].array.shape(),
            array.shape(),
            "shape change for '{name}'"
        );
        self.entries[i].array = array;
    }

    pub fn contains(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    /// Total number of trainable scalars.
    pub fn param_count(&self) -> usize {
        self.entries
            .iter()
            .filter(|e| e.section == Section::Param)
            .map(|e| e.array.len())
            .sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, Section, &ArrayD<f64>)> {
        self.entries
            .iter()
            .map(|e| (e.name.as_str(), e.section, &e.array))
    }

    pub fn param_names(&self) -> Vec<String> {
        self.entries
            .iter()
            .filter(|e| e.section == Section::Param)
            .map(|e| e.name.clone())
            .collect()
    }

    /// Load values for every entry from `(name, array)` pairs; all entries
    /// must be present with matching shapes.
    pub fn load_from(&mut self, tensors: &HashMap<String, ArrayD<f64>>) -> Result<()> {
        for e in &mut self.entries {
            let t = tensors.get(&e.name).ok_or_else(|| {
                Error::Checkpoint(format!("missing tensor '{}' in checkpoint", e.name))
            })?;
            if t.shape() != e.array.shape() {
                return Err(Error::Checkpoint(format!(
                    "tensor '{}' shape {:?} does not match model {:?}",
                    e.name,
                    t.shape(),
                    e.array.shape()
                )));
            }
            e.array = t.clone();
        }
        Ok(())
    }
}

/// One forward pass: binds store tensors onto a tape on first use.
pub struct Ctx<'a> {
    pub tape: Tape,
    store: &'a VarStore,
    bound: RefCell<HashMap<String, Var>>,
    pub training: bool,
    trainable: bool,
    dropout_rng: RefCell<Option<ChaCha12Rng>>,
    buffer_updates: RefCell<Vec<(String, ArrayD<f64>)>>,
}

impl<'a> Ctx<'a> {
    /// Bind parameters as differentiable leaves.
    pub fn new(tape: Tape, store: &'a VarStore, training: bool) -> Self {
        Ctx {
            tape,
            store,
            bound: RefCell::new(HashMap::new()),
            training,
            trainable: true,
            dropout_rng: RefCell::new(None),
            buffer_updates: RefCell::new(Vec::new()),
        }
    }

    /// Bind parameters as constants (no gradients flow into this network).
    pub fn frozen(tape: Tape, store: &'a VarStore, training: bool) -> Self {
        let mut c = Ctx::new(tape, store, training);
        c.trainable = false;
        c
    }

    /// Seed the dropout stream for this pass; without it dropout in
    /// training mode is an error.
    pub fn with_dropout_seed(self, seed: u64) -> Self {
        *self.dropout_rng.borrow_mut() = Some(seeds::rng_from(seed, &["dropout"]));
        self
    }

    pub fn param(&self, name: &str) -> Var {
        if let Some(v) = self.bound.borrow().get(name) {
            return v.clone();
        }
        let arr = self.store.get(name).clone();
        let v = if self.trainable {
            self.tape.leaf(arr)
        } else {
            self.tape.constant(arr)
        };
        self.bound.borrow_mut().insert(name.to_string(), v.clone());
        v
    }

    /// Buffers always bind as constants.
    pub fn buffer(&self, name: &str) -> Var {
        if let Some(v) = self.bound.borrow().get(name) {
            return v.clone();
        }
        let v = self.tape.constant(self.store.get(name).clone());
        self.bound.borrow_mut().insert(name.to_string(), v.clone());
        v
    }

    pub fn buffer_value(&self, name: &str) -> ArrayD<f64> {
        self.store.get(name).clone()
    }

    /// Inverted dropout with the pass-local seeded stream.
    pub fn dropout(&self, x: &Var, p: f64) -> Var {
        if !self.training || p <= 0.0 {
            return x.clone();
        }
        assert!(p < 1.0, "dropout probability must be < 1");
        let mut guard = self.dropout_rng.borrow_mut();
        let rng = guard
            .as_mut()
            .expect("training-mode dropout requires a dropout seed");
        let keep = 1.0 - p;
        let mask = x.with_value(|a| {
            use rand::Rng;
            a.mapv(|_| if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 })
        });
        x.mul(&self.tape.constant(mask))
    }

    pub fn queue_buffer_update(&self, name: &str, value: ArrayD<f64>) {
        self.buffer_updates.borrow_mut().push((name.to_string(), value));
    }

    /// Drain queued running-stat updates (applied by the trainer after the
    /// step so forward passes never mutate the store).
    pub fn take_buffer_updates(&self) -> Vec<(String, ArrayD<f64>)> {
        std::mem::take(&mut self.buffer_updates.borrow_mut())
    }

    /// All parameters bound during this pass, for gradient collection.
    pub fn bound_params(&self) -> Vec<(String, Var)> {
        let bound = self.bound.borrow();
        let mut out: Vec<(String, Var)> = bound
            .iter()
            .filter(|(name, _)| {
                self.store.contains(name)
                    && self
                        .store
                        .iter()
                        .any(|(n, s, _)| n == name.as_str() && s == Section::Param)
            })
            .map(|(n, v)| (n.clone(), v.clone()))
            .collect();
        out.sort_by(|a, b| a.0.cmp(&b.0));
        out
    }
}
