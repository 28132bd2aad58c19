use std::collections::BTreeSet;

use crate::model::{Instant, TaskId};

/// Ordering key for a queued job. Smaller keys are served first.
///
/// Under rate priority the key is `(rank, release, task id, instance)`, so
/// the head is always the ready job of the shortest-period task. Under FIFO it
/// is `(ready time, insertion sequence)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct QueueKey {
    primary: u64,
    secondary: u64,
    tie: u64,
    pub job: usize,
}

impl QueueKey {
    pub fn rate_priority(rank: u32, release: Instant, task: TaskId, instance: u32, job: usize) -> Self {
        QueueKey { primary: rank as u64, secondary: release, tie: (task.0 as u64) << 32 | instance as u64, job }
    }

    pub fn fifo(ready_at: Instant, seq: u64, job: usize) -> Self {
        QueueKey { primary: ready_at, secondary: seq, tie: 0, job }
    }

    /// Priority rank for rate-priority keys; ready time for FIFO keys.
    pub fn primary(&self) -> u64 {
        self.primary
    }
}

#[derive(Clone, Debug, Default)]
pub struct ReadyQueue {
    jobs: BTreeSet<QueueKey>,
}

impl ReadyQueue {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, key: QueueKey) -> bool {
        self.jobs.insert(key)
    }

    pub fn remove(&mut self, key: &QueueKey) -> bool {
        self.jobs.remove(key)
    }

    pub fn peek(&self) -> Option<&QueueKey> {
        self.jobs.first()
    }

    pub fn iter(&self) -> impl Iterator<Item = &QueueKey> {
        self.jobs.iter()
    }

    pub fn len(&self) -> usize {
        self.jobs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.jobs.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn head_is_highest_rank_then_earliest_release() {
        let mut q = ReadyQueue::new();
        q.push(QueueKey::rate_priority(2, 0, TaskId(7), 0, 0));
        q.push(QueueKey::rate_priority(0, 50, TaskId(3), 1, 1));
        q.push(QueueKey::rate_priority(0, 10, TaskId(3), 0, 2));
        assert_eq!(q.peek().unwrap().job, 2);
        q.remove(&QueueKey::rate_priority(0, 10, TaskId(3), 0, 2));
        assert_eq!(q.peek().unwrap().job, 1);
        assert_eq!(q.len(), 2);
    }

    #[test]
    fn fifo_orders_by_ready_time_then_sequence() {
        let mut q = ReadyQueue::new();
        q.push(QueueKey::fifo(5, 2, 0));
        q.push(QueueKey::fifo(5, 1, 1));
        q.push(QueueKey::fifo(3, 9, 2));
        let order: Vec<usize> = q.iter().map(|k| k.job).collect();
        assert_eq!(order, vec![2, 1, 0]);
    }
}
