use nalgebra::Vector3;

use crate::scene::CartesianVelocity;

/// `alpha + (1 - alpha) (1 - exp(-d / k))`.
pub fn blend_weight(d: f64, alpha: f64, k: f64) -> f64 {
    alpha + (1.0 - alpha) * (1.0 - (-d / k).exp())
}

/// Visual-servoing and height-compensation actions and their mix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActionPair {
    pub a_vs: CartesianVelocity,
    /// Vertical only.
    pub a_hc: CartesianVelocity,
    pub beta: f64,
    pub a: CartesianVelocity,
}

impl ActionPair {
    /// Both actions zero.
    pub fn hold(beta: f64) -> Self {
        Self {
            a_vs: CartesianVelocity::ZERO,
            a_hc: CartesianVelocity::ZERO,
            beta,
            a: CartesianVelocity::ZERO,
        }
    }

    /// Recomputes the mix and checks it is the one stored.
    pub fn is_consistent(&self) -> bool {
        self.a_hc.0.x == 0.0 && self.a_hc.0.y == 0.0 && mix(&self.a_vs, &self.a_hc, self.beta) == self.a.0
    }
}

fn mix(a_vs: &CartesianVelocity, a_hc: &CartesianVelocity, beta: f64) -> Vector3<f64> {
    a_vs.0 * beta + a_hc.0 * (1.0 - beta)
}

/// Mixes the two actions with the weight for height error `d`. The lateral
/// components of `a_hc` are discarded.
pub fn blend(a_vs: CartesianVelocity, a_hc: CartesianVelocity, d: f64, alpha: f64, k: f64) -> ActionPair {
    with_weight(a_vs, a_hc, blend_weight(d, alpha, k))
}

impl ActionPair {
    /// Scales both actions by the same factor so the mix stays within `limit`.
    pub fn limited(self, limit: f64) -> Self {
        let n = self.a.0.norm();
        if n <= limit || n == 0.0 {
            return self;
        }
        let k = limit / n;
        let pair = with_weight(
            CartesianVelocity(self.a_vs.0 * k),
            CartesianVelocity(self.a_hc.0 * k),
            self.beta,
        );
        // Rounding can leave the rescaled mix a hair above the limit.
        if pair.a.0.norm() > limit {
            with_weight(
                CartesianVelocity(pair.a_vs.0 * (1.0 - 1e-12)),
                CartesianVelocity(pair.a_hc.0 * (1.0 - 1e-12)),
                self.beta,
            )
        } else {
            pair
        }
    }
}

pub(crate) fn with_weight(a_vs: CartesianVelocity, a_hc: CartesianVelocity, beta: f64) -> ActionPair {
    let a_hc = CartesianVelocity::vertical(a_hc.0.z);
    ActionPair {
        a: CartesianVelocity(mix(&a_vs, &a_hc, beta)),
        a_vs,
        a_hc,
        beta,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weight_at_zero_is_the_floor() {
        for alpha in [0.0, 0.2, 0.35, 1.0] {
            assert_eq!(blend_weight(0.0, alpha, 2.0), alpha);
        }
    }

    #[test]
    fn weight_at_one_decay_length() {
        let oracle = 0.2 + 0.8 * (1.0 - (-1.0f64).exp());
        assert!((blend_weight(2.0, 0.2, 2.0) - oracle).abs() < 1e-12);
        assert!((blend_weight(2.0, 0.2, 2.0) - 0.7057).abs() < 1e-4);
    }

    #[test]
    fn limiting_keeps_the_mix() {
        let p = blend(
            CartesianVelocity::new(30.0, 0.0, 0.0),
            CartesianVelocity::vertical(-10.0),
            5.0,
            0.2,
            2.0,
        );
        assert!(p.a.speed() > 10.0);
        let q = p.limited(10.0);
        assert!(q.a.speed() <= 10.0);
        assert!((q.a.speed() - 10.0).abs() < 1e-9);
        assert!(q.is_consistent());
        assert_eq!(q.beta, p.beta);
        let slow = blend(CartesianVelocity::new(1.0, 0.0, 0.0), CartesianVelocity::ZERO, 0.0, 0.2, 2.0);
        assert_eq!(slow.limited(10.0), slow);
    }

    #[test]
    fn far_from_target_is_pure_servoing() {
        assert!((blend_weight(200.0, 0.3, 2.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn blended_command_is_the_convex_mix() {
        let p = blend(
            CartesianVelocity::new(1.0, -2.0, 3.0),
            CartesianVelocity::new(5.0, 5.0, -4.0),
            1.0,
            0.2,
            2.0,
        );
        assert!(p.is_consistent());
        assert_eq!(p.a_hc, CartesianVelocity::vertical(-4.0));
        let b = p.beta;
        assert!((p.a.0 - Vector3::new(b, -2.0 * b, 3.0 * b - 4.0 * (1.0 - b))).norm() < 1e-15);
    }
}
