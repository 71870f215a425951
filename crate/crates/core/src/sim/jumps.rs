use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;

/// Dark-pool fill times, merged over assets.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct JumpSchedule {
    /// `(time, asset)` in increasing time.
    pub events: Vec<(f64, usize)>,
}

impl JumpSchedule {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Schedule from explicit events; sorts by time.
    pub fn from_events(mut events: Vec<(f64, usize)>) -> Self {
        events.sort_by(|a, b| a.0.total_cmp(&b.0));
        Self { events }
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }
}

/// Independent Poisson clocks on `(t0, horizon)`. Asset `i` draws from
/// stream `i` of a ChaCha8 generator keyed by `seed`, so adding assets does
/// not perturb the others' draws.
pub fn draw_jumps(theta: &[f64], t0: f64, horizon: f64, seed: u64) -> JumpSchedule {
    let mut events = Vec::new();
    for (i, &rate) in theta.iter().enumerate() {
        if !(rate > 0.0) {
            continue;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        let mut t = t0;
        loop {
            let e: f64 = rng.sample(Exp1);
            t += e / rate;
            if t >= horizon {
                break;
            }
            events.push((t, i));
        }
    }
    JumpSchedule::from_events(events)
}
