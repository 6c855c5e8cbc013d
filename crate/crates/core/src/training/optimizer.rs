use crate::model::ModelParams;

/// Adam with optional decoupled weight decay on the decay tensors.
#[derive(Debug, Clone)]
pub struct AdamW {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: ModelParams,
    v: ModelParams,
    t: i32,
}

impl AdamW {
    pub fn new(params: &ModelParams) -> Self {
        AdamW {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: params.zeros_like(),
            v: params.zeros_like(),
            t: 0,
        }
    }

    pub fn steps_taken(&self) -> i32 {
        self.t
    }

    /// One update. `weight_decay` multiplies decay tensors by `1 - lr * weight_decay`
    /// before the moment step; pass 0 for plain Adam.
    pub fn step(
        &mut self,
        params: &mut ModelParams,
        grads: &ModelParams,
        lr: f64,
        weight_decay: f64,
    ) {
        self.t += 1;
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        let c1 = 1.0 - b1.powi(self.t);
        let c2 = 1.0 - b2.powi(self.t);
        let groups = params
            .tensors_mut()
            .into_iter()
            .zip(grads.tensors())
            .zip(self.m.tensors_mut())
            .zip(self.v.tensors_mut());
        for (((p, g), m), v) in groups {
            let decay = if p.decay {
                1.0 - lr * weight_decay
            } else {
                1.0
            };
            for (((w, &gx), mx), vx) in p
                .data
                .iter_mut()
                .zip(g.data)
                .zip(m.data.iter_mut())
                .zip(v.data.iter_mut())
            {
                *w *= decay;
                *mx = b1 * *mx + (1.0 - b1) * gx;
                *vx = b2 * *vx + (1.0 - b2) * gx * gx;
                *w -= lr * (*mx / c1) / ((*vx / c2).sqrt() + eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;

    fn tiny() -> ModelParams {
        let cfg = ModelConfig {
            vocab_size: 10,
            d_model: 4,
            n_heads: 1,
            n_layers: 1,
            d_ff: 4,
            max_positions: 4,
            n_classes: 2,
            dropout: 0.0,
        };
        ModelParams::init(cfg, 1).unwrap()
    }

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        let mut p = tiny();
        let before = p.clone();
        let mut g = p.zeros_like();
        g.classifier_b[0] = 3.0;
        g.classifier_b[1] = -0.5;
        let mut opt = AdamW::new(&p);
        opt.step(&mut p, &g, 0.1, 0.0);
        assert!((p.classifier_b[0] - (before.classifier_b[0] - 0.1)).abs() < 1e-7);
        assert!((p.classifier_b[1] - (before.classifier_b[1] + 0.1)).abs() < 1e-7);
        assert_eq!(p.token_embedding, before.token_embedding);
    }

    #[test]
    fn decoupled_decay_skips_biases_and_norms() {
        let mut p = tiny();
        p.classifier_b.fill(1.0);
        let before = p.clone();
        let g = p.zeros_like();
        let mut opt = AdamW::new(&p);
        opt.step(&mut p, &g, 0.5, 0.1);
        assert_eq!(p.classifier_b, before.classifier_b);
        assert_eq!(p.final_norm.gain, before.final_norm.gain);
        let expect = &before.classifier_w * 0.95;
        assert!(p
            .classifier_w
            .iter()
            .zip(expect.iter())
            .all(|(a, b)| (a - b).abs() < 1e-15));
    }
}
