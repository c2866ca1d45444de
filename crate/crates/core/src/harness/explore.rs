use rand::Rng;

/// Index of the largest value, lowest index on ties.
pub fn argmax(q: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in q.iter().enumerate() {
        if v > q[best] {
            best = i;
        }
    }
    best
}

/// Uniform random action with probability `epsilon`, else [`argmax`].
pub fn epsilon_greedy<R: Rng + ?Sized>(q: &[f64], epsilon: f64, rng: &mut R) -> usize {
    if epsilon > 0.0 && rng.gen::<f64>() < epsilon {
        rng.gen_range(0..q.len())
    } else {
        argmax(q)
    }
}

/// Linear anneal from `start` to `end` over the first `fraction` of
/// `total` steps, then constant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearSchedule {
    pub start: f64,
    pub end: f64,
    pub fraction: f64,
    pub total: u64,
}

impl LinearSchedule {
    pub fn value(&self, step: u64) -> f64 {
        let span = self.fraction * self.total as f64;
        if span <= 0.0 || step as f64 >= span {
            return self.end;
        }
        self.start + (self.end - self.start) * step as f64 / span
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn ties_break_low() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(epsilon_greedy(&[1.0, 1.0], 0.0, &mut rng), 0);
        assert_eq!(epsilon_greedy(&[0.0, 3.0, 3.0], 0.0, &mut rng), 1);
    }

    #[test]
    fn full_exploration_is_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut counts = [0usize; 4];
        for _ in 0..10_000 {
            counts[epsilon_greedy(&[0.0, 5.0, 1.0, 2.0], 1.0, &mut rng)] += 1;
        }
        let sd = (10_000.0 * 0.25 * 0.75f64).sqrt();
        for c in counts {
            assert!((c as f64 - 2500.0).abs() < 3.0 * sd, "{counts:?}");
        }
    }

    #[test]
    fn schedule_endpoints() {
        let s = LinearSchedule { start: 1.0, end: 0.05, fraction: 0.1, total: 1000 };
        assert_eq!(s.value(0), 1.0);
        assert!((s.value(50) - 0.525).abs() < 1e-12);
        assert_eq!(s.value(100), 0.05);
        assert_eq!(s.value(10_000), 0.05);
    }
}
