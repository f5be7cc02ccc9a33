use ndarray::{Array2, ArrayView2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::backbone::{Backbone, BackboneCache, BackboneSpec};
use super::layers::{BatchNorm1d, BatchNormCache, Linear};
use super::params::{Grads, Group, ParamStore, Trainable};
use crate::error::{Error, Result};

/// Everything needed to rebuild a network's structure.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArchSpec {
    pub image_size: usize,
    pub channels: usize,
    pub backbone: BackboneSpec,
    pub bottleneck_dim: usize,
    pub num_classes: usize,
}

impl ArchSpec {
    pub fn input_len(&self) -> usize {
        self.image_size * self.image_size * self.channels
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::validation("need at least 2 classes"));
        }
        if self.bottleneck_dim == 0 || self.channels == 0 {
            return Err(Error::validation(
                "bottleneck_dim and channels must be positive",
            ));
        }
        self.backbone.validate(self.image_size, self.image_size)
    }
}

/// Backbone, bottleneck (affine + batch norm) and linear classifier.
pub struct NetworkAssembly {
    arch: ArchSpec,
    store: ParamStore,
    backbone: Backbone,
    bottleneck: Linear,
    bottleneck_bn: BatchNorm1d,
    classifier: Linear,
    trainable: Trainable,
}

/// Activations and caches of one training-mode forward pass.
pub struct TrainPass {
    pub features: Array2<f64>,
    pub logits: Array2<f64>,
    backbone_out: Array2<f64>,
    backbone_cache: BackboneCache,
    bn_cache: BatchNormCache,
}

impl NetworkAssembly {
    pub fn new(arch: ArchSpec, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let input = (arch.image_size, arch.image_size, arch.channels);
        let backbone = Backbone::new(&mut store, &mut rng, &arch.backbone, input);
        let bottleneck = Linear::new(
            &mut store,
            &mut rng,
            "bottleneck.fc",
            Group::Bottleneck,
            backbone.output_dim(),
            arch.bottleneck_dim,
        );
        let bottleneck_bn = BatchNorm1d::new(
            &mut store,
            "bottleneck.bn",
            Group::Bottleneck,
            arch.bottleneck_dim,
        );
        let classifier = Linear::new(
            &mut store,
            &mut rng,
            "classifier.fc",
            Group::Classifier,
            arch.bottleneck_dim,
            arch.num_classes,
        );
        Ok(NetworkAssembly {
            arch,
            store,
            backbone,
            bottleneck,
            bottleneck_bn,
            classifier,
            trainable: Trainable::default(),
        })
    }

    /// Rebuilds the structure for `arch` and installs `store` in place of fresh weights.
    pub fn from_parts(arch: ArchSpec, store: ParamStore) -> Result<Self> {
        let mut net = NetworkAssembly::new(arch, 0)?;
        if !net.store.same_layout(&store) {
            return Err(Error::CheckpointMismatch(
                "parameter layout does not match the architecture".into(),
            ));
        }
        net.store = store;
        Ok(net)
    }

    pub fn arch(&self) -> &ArchSpec {
        &self.arch
    }

    pub fn num_classes(&self) -> usize {
        self.arch.num_classes
    }

    pub fn params(&self) -> &ParamStore {
        &self.store
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn trainable(&self) -> Trainable {
        self.trainable
    }

    /// Marks groups as trainable or frozen by name.
    pub fn set_trainable(&mut self, groups: &[(&str, bool)]) -> Result<()> {
        let mut next = self.trainable;
        for (name, on) in groups {
            next.set(name.parse::<Group>()?, *on);
        }
        self.trainable = next;
        Ok(())
    }

    pub fn set_trainable_groups(&mut self, trainable: Trainable) {
        self.trainable = trainable;
    }

    fn check_input(&self, images: ArrayView2<f64>) -> Result<()> {
        if images.ncols() != self.arch.input_len() {
            return Err(Error::validation(format!(
                "image rows have {} values, network expects {} ({}x{}x{})",
                images.ncols(),
                self.arch.input_len(),
                self.arch.image_size,
                self.arch.image_size,
                self.arch.channels
            )));
        }
        if images.nrows() == 0 {
            return Err(Error::validation("empty batch"));
        }
        Ok(())
    }

    /// Inference-mode pass: bottleneck features and logits. Batch norm uses running statistics.
    pub fn forward_features(&self, images: ArrayView2<f64>) -> Result<(Array2<f64>, Array2<f64>)> {
        self.check_input(images)?;
        let (h, _) = self.backbone.forward(&self.store, images);
        let z = self.bottleneck.forward(&self.store, h.view());
        let (features, _) = self.bottleneck_bn.forward(&self.store, z.view(), false);
        let logits = self.classifier.forward(&self.store, features.view());
        Ok((features, logits))
    }

    /// Logits only, inference mode. No domain information is involved.
    pub fn predict_logits(&self, images: ArrayView2<f64>) -> Result<Array2<f64>> {
        Ok(self.forward_features(images)?.1)
    }

    pub fn forward_train(&self, images: ArrayView2<f64>) -> Result<TrainPass> {
        self.check_input(images)?;
        if images.nrows() < 2 {
            return Err(Error::validation(
                "training-mode batch norm needs a batch of at least 2",
            ));
        }
        let (backbone_out, backbone_cache) = self.backbone.forward(&self.store, images);
        let projected = self.bottleneck.forward(&self.store, backbone_out.view());
        let (features, bn_cache) = self
            .bottleneck_bn
            .forward(&self.store, projected.view(), true);
        let logits = self.classifier.forward(&self.store, features.view());
        Ok(TrainPass {
            features,
            logits,
            backbone_out,
            backbone_cache,
            bn_cache,
        })
    }

    /// Accumulates parameter gradients of trainable groups for `dlogits`.
    pub fn backward(&self, pass: &TrainPass, dlogits: ArrayView2<f64>, grads: &mut Grads) {
        let t = self.trainable;
        let dfeat = self.classifier.backward(
            &self.store,
            pass.features.view(),
            dlogits,
            if t.classifier {
                Some(&mut *grads)
            } else {
                None
            },
        );
        if !(t.bottleneck || t.backbone) {
            return;
        }
        let dproj = self.bottleneck_bn.backward(
            &self.store,
            &pass.bn_cache,
            dfeat.view(),
            if t.bottleneck {
                Some(&mut *grads)
            } else {
                None
            },
        );
        let dh = self.bottleneck.backward(
            &self.store,
            pass.backbone_out.view(),
            dproj.view(),
            if t.bottleneck {
                Some(&mut *grads)
            } else {
                None
            },
        );
        if t.backbone {
            self.backbone
                .backward(&self.store, &pass.backbone_cache, dh.view(), grads);
        }
    }

    /// Folds the batch statistics of a training pass into the running statistics.
    /// A frozen bottleneck keeps its statistics too.
    pub fn commit_batch_stats(&mut self, pass: &TrainPass) {
        if self.trainable.bottleneck {
            self.bottleneck_bn
                .commit_running_stats(&mut self.store, &pass.bn_cache);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::layers::gradcheck::{max_rel_err, numeric_grad};
    use crate::nn::params::ParamKind;
    use ndarray::Axis;
    use rand_distr::{Distribution, Uniform};

    fn tiny_arch(backbone: BackboneSpec) -> ArchSpec {
        ArchSpec {
            image_size: 8,
            channels: 3,
            backbone,
            bottleneck_dim: 6,
            num_classes: 4,
        }
    }

    fn random_images(n: usize, len: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = Uniform::new(0.0, 1.0).unwrap();
        Array2::from_shape_fn((n, len), |_| d.sample(&mut rng))
    }

    #[test]
    fn softmax_of_forward_output_is_a_distribution() {
        let net = NetworkAssembly::new(
            tiny_arch(BackboneSpec::Conv {
                channels: vec![4, 4],
            }),
            0,
        )
        .unwrap();
        let x = random_images(5, net.arch().input_len(), 1);
        let (_, logits) = net.forward_features(x.view()).unwrap();
        let p = crate::math::softmax_rows(logits.view());
        for row in p.rows() {
            assert!((row.sum() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let net =
            NetworkAssembly::new(tiny_arch(BackboneSpec::Conv { channels: vec![4] }), 0).unwrap();
        let x = Array2::<f64>::zeros((2, 10));
        assert!(matches!(
            net.forward_features(x.view()),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn zero_classifier_gives_uniform_softmax() {
        let mut net =
            NetworkAssembly::new(tiny_arch(BackboneSpec::Conv { channels: vec![4] }), 0).unwrap();
        for p in net
            .params_mut()
            .iter_mut()
            .filter(|p| p.group == Group::Classifier)
        {
            p.data.iter_mut().for_each(|v| *v = 0.0);
        }
        let x = random_images(3, net.arch().input_len(), 2);
        let (_, logits) = net.forward_features(x.view()).unwrap();
        assert!(logits.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn inference_is_batch_independent() {
        let net = NetworkAssembly::new(
            tiny_arch(BackboneSpec::Conv {
                channels: vec![4, 4],
            }),
            3,
        )
        .unwrap();
        let x = random_images(8, net.arch().input_len(), 4);
        let (f_all, l_all) = net.forward_features(x.view()).unwrap();
        let one = x.select(Axis(0), &[5]);
        let (f_one, l_one) = net.forward_features(one.view()).unwrap();
        assert_eq!(f_all.row(5), f_one.row(0));
        assert_eq!(l_all.row(5), l_one.row(0));
    }

    #[test]
    fn unknown_group_name_is_rejected() {
        let mut net =
            NetworkAssembly::new(tiny_arch(BackboneSpec::Conv { channels: vec![4] }), 0).unwrap();
        assert!(net.set_trainable(&[("head", false)]).is_err());
        assert!(net.trainable().classifier);
    }

    fn check_full_network_gradient(spec: BackboneSpec) {
        let net = NetworkAssembly::new(tiny_arch(spec), 7).unwrap();
        let x = random_images(3, net.arch().input_len(), 8);
        let probe = random_images(3, 4, 9) - 0.5;
        let loss = |store: &ParamStore| {
            let n = NetworkAssembly::from_parts(net.arch().clone(), store.clone()).unwrap();
            (&n.forward_train(x.view()).unwrap().logits * &probe).sum()
        };
        let pass = net.forward_train(x.view()).unwrap();
        let mut grads = Grads::zeros_like(net.params());
        net.backward(&pass, probe.view(), &mut grads);
        for (i, p) in net.params().iter().enumerate() {
            if p.kind == ParamKind::Buffer {
                continue;
            }
            let m = Array2::from_shape_vec((1, p.data.len()), p.data.clone()).unwrap();
            let num = numeric_grad(&m, 1e-5, |m| {
                let mut s = net.params().clone();
                s.iter_mut().nth(i).unwrap().data = m.iter().copied().collect();
                loss(&s)
            });
            let ana =
                Array2::from_shape_vec((1, p.data.len()), grads.by_index(i).to_vec()).unwrap();
            // Biases feeding batch norm have a true gradient of zero; only
            // finite-difference noise remains, so also accept a tiny absolute gap.
            let err = max_rel_err(&ana, &num);
            let abs = (&ana - &num).iter().fold(0.0f64, |m, v| m.max(v.abs()));
            assert!(
                err < 1e-4 || abs < 1e-8,
                "{}: rel err {err}, abs {abs}",
                p.name
            );
        }
    }

    #[test]
    fn conv_network_gradients_match_finite_differences() {
        check_full_network_gradient(BackboneSpec::Conv {
            channels: vec![3, 4],
        });
    }

    #[test]
    fn attention_network_gradients_match_finite_differences() {
        check_full_network_gradient(BackboneSpec::Attention {
            patch: 4,
            embed_dim: 4,
            heads: 2,
            depth: 2,
            mlp_dim: 6,
        });
    }

    #[test]
    fn frozen_groups_get_no_gradient() {
        let mut net =
            NetworkAssembly::new(tiny_arch(BackboneSpec::Conv { channels: vec![4] }), 0).unwrap();
        net.set_trainable(&[("classifier", false), ("backbone", false)])
            .unwrap();
        let x = random_images(4, net.arch().input_len(), 1);
        let pass = net.forward_train(x.view()).unwrap();
        let mut grads = Grads::zeros_like(net.params());
        net.backward(&pass, Array2::ones((4, 4)).view(), &mut grads);
        for (i, p) in net.params().iter().enumerate() {
            let touched = grads.by_index(i).iter().any(|&g| g != 0.0);
            if p.group != Group::Bottleneck {
                assert!(!touched, "{} should be untouched", p.name);
            }
        }
    }
}
