use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::task::FetchTask;

/// One agent's risk for one task.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bid {
    pub agent: u32,
    pub task: u64,
    pub risk: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Allocation {
    /// Task id to winning bid.
    pub assigned: BTreeMap<u64, Bid>,
    /// Tasks that received no bid with risk at most epsilon.
    pub flagged: Vec<u64>,
}

/// Greedy risk auction. Tasks go in `(due step, id)` order; each goes to
/// the lowest-risk bidder with risk `<= epsilon` not already served in this
/// round, ties to the lower agent id.
pub fn allocate(tasks: &[FetchTask], bids: &[Bid], epsilon: f64) -> Allocation {
    let mut order: Vec<&FetchTask> = tasks.iter().collect();
    order.sort_by_key(|t| (t.due_step(), t.id));
    let mut busy = BTreeSet::new();
    let mut out = Allocation::default();
    for task in order {
        let best = bids
            .iter()
            .filter(|b| b.task == task.id && b.risk <= epsilon && !busy.contains(&b.agent))
            .min_by(|a, b| a.risk.total_cmp(&b.risk).then(a.agent.cmp(&b.agent)));
        match best {
            Some(b) => {
                busy.insert(b.agent);
                out.assigned.insert(task.id, *b);
            }
            None => out.flagged.push(task.id),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tasking::task::TaskKind;

    fn task(id: u64, deadline: u64) -> FetchTask {
        FetchTask { id, kind: TaskKind::Home { destination: "H".into() }, issue_step: 0, deadline }
    }

    #[test]
    fn ties_go_to_lower_id() {
        let bids = [Bid { agent: 4, task: 1, risk: 0.1 }, Bid { agent: 2, task: 1, risk: 0.1 }];
        assert_eq!(allocate(&[task(1, 5)], &bids, 0.2).assigned[&1].agent, 2);
    }
}
