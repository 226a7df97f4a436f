//! Adam with decoupled weight decay, over named store parameters.

use std::collections::HashMap;

use ndarray::ArrayD;

use crate::nn::VarStore;

#[derive(Debug, Clone)]
pub struct AdamW {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Decoupled decay; zero recovers plain Adam.
    pub weight_decay: f64,
    m: HashMap<String, ArrayD<f64>>,
    v: HashMap<String, ArrayD<f64>>,
    t: u64,
}

impl AdamW {
    pub fn new(beta1: f64, beta2: f64, weight_decay: f64) -> Self {
        AdamW {
            beta1,
            beta2,
            eps: 1e-8,
            weight_decay,
            m: HashMap::new(),
            v: HashMap::new(),
            t: 0,
        }
    }

    pub fn t(&self) -> u64 {
        self.t
    }

    /// One update over `(name, grad)` pairs; `lr` comes from the scheduler.
    pub fn step(&mut self, vs: &mut VarStore, grads: &[(String, ArrayD<f64>)], lr: f64) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for (name, g) in grads {
            let m = self
                .m
                .entry(name.clone())
                .or_insert_with(|| ArrayD::zeros(g.raw_dim()));
            let v = self
                .v
                .entry(name.clone())
                .or_insert_with(|| ArrayD::zeros(g.raw_dim()));
            *m = &*m * self.beta1 + g * (1.0 - self.beta1);
            *v = &*v * self.beta2 + &g.mapv(|x| x * x) * (1.0 - self.beta2);
            let mut p = vs.get(name).clone();
            ndarray::Zip::from(&mut p)
                .and(&*m)
                .and(&*v)
                .for_each(|p, &m, &v| {
                    let mhat = m / bc1;
                    let vhat = v / bc2;
                    *p -= lr * (mhat / (vhat.sqrt() + self.eps) + self.weight_decay * *p);
                });
            vs.set(name, p);
        }
    }

    /// Flatten optimizer state into named tensors under `prefix/`.
    pub fn export_state(&self, prefix: &str) -> Vec<(String, ArrayD<f64>)> {
        let mut out = vec![(
            format!("{prefix}/t"),
            ArrayD::from_elem(ndarray::IxDyn(&[]), self.t as f64),
        )];
        let mut names: Vec<&String> = self.m.keys().collect();
        names.sort();
        for n in names {
            out.push((format!("{prefix}/m/{n}"), self.m[n].clone()));
            out.push((format!("{prefix}/v/{n}"), self.v[n].clone()));
        }
        out
    }

    /// Restore state exported by `export_state`.
    pub fn import_state(&mut self, prefix: &str, tensors: &HashMap<String, ArrayD<f64>>) {
        self.m.clear();
        self.v.clear();
        self.t = tensors
            .get(&format!("{prefix}/t"))
            .and_then(|t| t.iter().next().copied())
            .unwrap_or(0.0) as u64;
        let mpre = format!("{prefix}/m/");
        let vpre = format!("{prefix}/v/");
        for (name, t) in tensors {
            if let Some(p) = name.strip_prefix(&mpre) {
                self.m.insert(p.to_string(), t.clone());
            } else if let Some(p) = name.strip_prefix(&vpre) {
                self.v.insert(p.to_string(), t.clone());
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Section;
    use ndarray::IxDyn;

    #[test]
    fn adam_moves_against_gradient() {
        let mut vs = VarStore::new();
        vs.add("p", Section::Param, ArrayD::from_elem(IxDyn(&[2]), 1.0));
        let mut opt = AdamW::new(0.5, 0.999, 0.0);
        let g = ArrayD::from_elem(IxDyn(&[2]), 2.0);
        let before = vs.get("p").clone();
        opt.step(&mut vs, &[("p".into(), g)], 0.1);
        let after = vs.get("p");
        assert!(after.iter().zip(before.iter()).all(|(a, b)| a < b));
    }

    #[test]
    fn weight_decay_shrinks_params_without_gradient_signal() {
        let mut vs = VarStore::new();
        vs.add("p", Section::Param, ArrayD::from_elem(IxDyn(&[1]), 4.0));
        let mut opt = AdamW::new(0.9, 0.999, 0.1);
        let g = ArrayD::zeros(IxDyn(&[1]));
        opt.step(&mut vs, &[("p".into(), g)], 0.5);
        let p = vs.get("p")[[0]];
        assert!((p - (4.0 - 0.5 * 0.1 * 4.0)).abs() < 1e-12);
    }

    #[test]
    fn state_round_trip() {
        let mut vs = VarStore::new();
        vs.add("a", Section::Param, ArrayD::from_elem(IxDyn(&[3]), 1.0));
        let mut opt = AdamW::new(0.5, 0.999, 1e-4);
        for i in 0..3 {
            let g = ArrayD::from_elem(IxDyn(&[3]), 0.1 * (i as f64 + 1.0));
            opt.step(&mut vs, &[("a".into(), g)], 0.01);
        }
        let state: HashMap<_, _> = opt.export_state("opt").into_iter().collect();
        let mut opt2 = AdamW::new(0.5, 0.999, 1e-4);
        opt2.import_state("opt", &state);
        assert_eq!(opt2.t(), 3);
        // a further identical step must produce identical parameters
        let mut vs2 = VarStore::new();
        vs2.add("a", Section::Param, vs.get("a").clone());
        let g = ArrayD::from_elem(IxDyn(&[3]), 0.05);
        opt.step(&mut vs, &[("a".into(), g.clone())], 0.01);
        opt2.step(&mut vs2, &[("a".into(), g)], 0.01);
        assert_eq!(vs.get("a"), vs2.get("a"));
    }
}
