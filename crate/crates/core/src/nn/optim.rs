use serde::{Deserialize, Serialize};

use super::params::{Grads, Group, ParamKind, ParamStore, Trainable};

/// Learning-rate schedule over training progress `p` in `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Schedule {
    Constant,
    /// `lr * (1 + gamma * p)^(-power)`
    InverseDecay {
        gamma: f64,
        power: f64,
    },
}

impl Schedule {
    pub fn factor(&self, progress: f64) -> f64 {
        match *self {
            Schedule::Constant => 1.0,
            Schedule::InverseDecay { gamma, power } => {
                (1.0 + gamma * progress.clamp(0.0, 1.0)).powf(-power)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SgdSettings {
    pub lr: f64,
    pub backbone_lr_mult: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub schedule: Schedule,
}

/// SGD with heavy-ball momentum and coupled weight decay.
pub struct Sgd {
    settings: SgdSettings,
    velocity: Vec<Vec<f64>>,
}

impl Sgd {
    pub fn new(settings: SgdSettings, store: &ParamStore) -> Self {
        Sgd {
            settings,
            velocity: store.iter().map(|p| vec![0.0; p.data.len()]).collect(),
        }
    }

    pub fn settings(&self) -> &SgdSettings {
        &self.settings
    }

    fn group_lr(&self, group: Group, progress: f64) -> f64 {
        let base = self.settings.lr * self.settings.schedule.factor(progress);
        match group {
            Group::Backbone => base * self.settings.backbone_lr_mult,
            _ => base,
        }
    }

    /// Updates trainable weights in place. Frozen groups and buffers are never written.
    pub fn step(
        &mut self,
        store: &mut ParamStore,
        grads: &Grads,
        trainable: Trainable,
        progress: f64,
    ) {
        let (mu, wd) = (self.settings.momentum, self.settings.weight_decay);
        let lrs: Vec<f64> = Group::ALL
            .iter()
            .map(|&g| self.group_lr(g, progress))
            .collect();
        for (i, (param, vel)) in store.iter_mut().zip(self.velocity.iter_mut()).enumerate() {
            if param.kind == ParamKind::Buffer || !trainable.get(param.group) {
                continue;
            }
            let lr = lrs[param.group as usize];
            let g = grads.by_index(i);
            for ((w, v), &gi) in param.data.iter_mut().zip(vel.iter_mut()).zip(g) {
                let d = gi + wd * *w;
                *v = mu * *v + d;
                *w -= lr * *v;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverse_decay_matches_closed_form() {
        let s = Schedule::InverseDecay {
            gamma: 10.0,
            power: 0.75,
        };
        assert_eq!(s.factor(0.0), 1.0);
        assert!((s.factor(1.0) - 11f64.powf(-0.75)).abs() < 1e-15);
    }

    #[test]
    fn plain_sgd_step_moves_against_gradient() {
        let mut store = ParamStore::new();
        let id = store.add(
            "w",
            Group::Classifier,
            ParamKind::Weight,
            vec![2],
            vec![1.0, -1.0],
        );
        let mut grads = Grads::zeros_like(&store);
        grads.vector_mut(id).copy_from_slice(&[0.5, -0.5]);
        let mut opt = Sgd::new(
            SgdSettings {
                lr: 0.1,
                backbone_lr_mult: 0.1,
                momentum: 0.0,
                weight_decay: 0.0,
                schedule: Schedule::Constant,
            },
            &store,
        );
        opt.step(&mut store, &grads, Trainable::all(true), 0.0);
        assert_eq!(store.get(id).data, vec![0.95, -0.95]);
    }
}
