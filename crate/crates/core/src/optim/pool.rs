use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::tensor::{Element, Tensor};

pub const DEFAULT_POOL_CAPACITY: usize = 50;

/// History buffer of generated images fed to the discriminators.
#[derive(Clone, Debug)]
pub struct ImagePool<T: Element = f32> {
    capacity: usize,
    buffer: Vec<Tensor<T>>,
    rng: ChaCha8Rng,
}

impl<T: Element> ImagePool<T> {
    pub fn new(capacity: usize, seed: u64) -> Self {
        Self {
            capacity,
            buffer: Vec::with_capacity(capacity),
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.buffer.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buffer.is_empty()
    }

    pub fn images(&self) -> &[Tensor<T>] {
        &self.buffer
    }

    pub fn rng(&self) -> &ChaCha8Rng {
        &self.rng
    }

    /// Restores buffer and rng (checkpoint resume).
    pub fn restore(&mut self, images: Vec<Tensor<T>>, rng: ChaCha8Rng) {
        self.buffer = images;
        self.buffer.truncate(self.capacity);
        self.rng = rng;
    }

    pub fn clear(&mut self) {
        self.buffer.clear();
    }

    /// Returns a batch for the discriminator: while filling up, the fresh
    /// images themselves; once full, each fresh image is swapped with a
    /// random stored one with probability ½.
    pub fn query(&mut self, fresh: &Tensor<T>) -> Result<Tensor<T>> {
        if self.capacity == 0 {
            return Ok(fresh.clone());
        }
        let (n, _, _, _) = fresh.dims4()?;
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            let img = fresh.batch_item(i)?;
            if self.buffer.len() < self.capacity {
                self.buffer.push(img.clone());
                out.push(img);
            } else if self.rng.random::<f64>() > 0.5 {
                let idx = self.rng.random_range(0..self.capacity);
                out.push(std::mem::replace(&mut self.buffer[idx], img));
            } else {
                out.push(img);
            }
        }
        let refs: Vec<&Tensor<T>> = out.iter().collect();
        Tensor::stack_batch(&refs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn batch(n: usize, v: f32) -> Tensor<f32> {
        Tensor::from_fn([n, 3, 2, 2], |i| v + (i / 12) as f32)
    }

    #[test]
    fn first_batch_passes_through() {
        let mut pool = ImagePool::new(50, 0);
        let b = batch(4, 0.0);
        assert_eq!(pool.query(&b).unwrap(), b);
        assert_eq!(pool.len(), 4);
    }

    #[test]
    fn never_exceeds_capacity() {
        let mut pool = ImagePool::new(50, 1);
        for i in 0..40 {
            pool.query(&batch(3, i as f32)).unwrap();
            assert!(pool.len() <= 50);
        }
        assert_eq!(pool.len(), 50);
    }

    #[test]
    fn replays_identically() {
        let run = || {
            let mut pool = ImagePool::new(5, 9);
            (0..30)
                .map(|i| pool.query(&batch(2, i as f32)).unwrap())
                .collect::<Vec<_>>()
        };
        let a = run();
        assert_eq!(a, run());
        // Once full, some returned images come from history.
        assert!(a[10..].iter().enumerate().any(|(j, t)| t.data()[0] != (j + 10) as f32));
    }
}
