use std::collections::VecDeque;

/// FIFO of accepted ids; emits full batches in acceptance order.
#[derive(Clone, Debug)]
pub struct CandidateBuffer {
    queue: VecDeque<u64>,
    batch_size: usize,
}

impl CandidateBuffer {
    pub fn new(batch_size: usize) -> Self {
        assert!(batch_size > 0, "batch size must be positive");
        CandidateBuffer {
            queue: VecDeque::new(),
            batch_size,
        }
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    pub fn len(&self) -> usize {
        self.queue.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queue.is_empty()
    }

    pub fn pending(&self) -> impl Iterator<Item = u64> + '_ {
        self.queue.iter().copied()
    }

    pub fn push(&mut self, id: u64) {
        self.queue.push_back(id);
    }

    /// The first `B` ids, if that many are waiting.
    pub fn pop_batch(&mut self) -> Option<Vec<u64>> {
        (self.queue.len() >= self.batch_size)
            .then(|| self.queue.drain(..self.batch_size).collect())
    }
}
