use rand::Rng;

use crate::protocol::ListenerEstimate;

/// Each listener pings once at a uniform time in `[0, interval − ping]`;
/// pings that overlap another ping are lost.
pub fn ping_estimate<R: Rng + ?Sized>(listeners: usize, interval: f64, ping: f64, rng: &mut R) -> ListenerEstimate {
    if listeners <= 1 {
        return ListenerEstimate::exact(listeners);
    }
    let span = interval - ping;
    let mut starts: Vec<f64> = (0..listeners).map(|_| rng.gen::<f64>() * span).collect();
    starts.sort_by(f64::total_cmp);
    let heard = (0..listeners)
        .filter(|&k| {
            let clear_before = k == 0 || starts[k] - starts[k - 1] >= ping;
            let clear_after = k + 1 == listeners || starts[k + 1] - starts[k] >= ping;
            clear_before && clear_after
        })
        .count();
    ListenerEstimate::exact(heard)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn trivial_counts() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(ping_estimate(0, 8e-3, 4e-4, &mut rng), ListenerEstimate { count_estimate: 0, any_estimate: false });
        for _ in 0..100 {
            assert_eq!(ping_estimate(1, 8e-3, 4e-4, &mut rng), ListenerEstimate::exact(1));
        }
    }

    #[test]
    fn never_overcounts() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for n in 2..8 {
            for _ in 0..1000 {
                assert!(ping_estimate(n, 8e-3, 4e-4, &mut rng).count_estimate <= n);
            }
        }
    }
}
