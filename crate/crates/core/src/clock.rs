//! Time sources for the optimizer loop.
//!
//! Production runs use the wall clock. The tick clock advances a fixed amount
//! on every reading, which makes timeouts and timing columns reproducible.

use std::cell::Cell;
use std::time::Instant;

pub trait Clock {
    /// Seconds elapsed since the clock was created.
    fn elapsed(&self) -> f64;
}

pub struct WallClock {
    start: Instant,
}

impl WallClock {
    pub fn new() -> Self {
        WallClock {
            start: Instant::now(),
        }
    }
}

impl Default for WallClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for WallClock {
    fn elapsed(&self) -> f64 {
        self.start.elapsed().as_secs_f64()
    }
}

/// Logical clock: each reading returns the previous reading plus `tick`.
pub struct TickClock {
    tick: f64,
    now: Cell<f64>,
}

impl TickClock {
    pub fn new(tick: f64) -> Self {
        TickClock {
            tick,
            now: Cell::new(0.0),
        }
    }
}

impl Clock for TickClock {
    fn elapsed(&self) -> f64 {
        let t = self.now.get() + self.tick;
        self.now.set(t);
        t
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tick_clock_is_deterministic() {
        let c = TickClock::new(0.5);
        assert_eq!(c.elapsed(), 0.5);
        assert_eq!(c.elapsed(), 1.0);
    }
}
