//! Reachability and recurrent-class analysis on the transition graph.

use std::collections::VecDeque;

pub(crate) fn reachable_from(adj: &[Vec<usize>], start: usize) -> Vec<bool> {
    let mut seen = vec![false; adj.len()];
    let mut queue = VecDeque::new();
    seen[start] = true;
    queue.push_back(start);
    while let Some(v) = queue.pop_front() {
        for &w in &adj[v] {
            if !seen[w] {
                seen[w] = true;
                queue.push_back(w);
            }
        }
    }
    seen
}

/// Tarjan's algorithm with an explicit stack (state spaces can be large
/// enough to make recursion unattractive).
pub(crate) fn strongly_connected_components(adj: &[Vec<usize>]) -> Vec<Vec<usize>> {
    let n = adj.len();
    const UNSEEN: usize = usize::MAX;
    let mut index = vec![UNSEEN; n];
    let mut lowlink = vec![0usize; n];
    let mut on_stack = vec![false; n];
    let mut stack: Vec<usize> = Vec::new();
    let mut next = 0usize;
    let mut components = Vec::new();
    let mut frames: Vec<(usize, usize)> = Vec::new();

    for root in 0..n {
        if index[root] != UNSEEN {
            continue;
        }
        index[root] = next;
        lowlink[root] = next;
        next += 1;
        stack.push(root);
        on_stack[root] = true;
        frames.push((root, 0));

        while let Some(frame) = frames.last_mut() {
            let (v, child) = (frame.0, frame.1);
            if child < adj[v].len() {
                frame.1 += 1;
                let w = adj[v][child];
                if index[w] == UNSEEN {
                    index[w] = next;
                    lowlink[w] = next;
                    next += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    frames.push((w, 0));
                } else if on_stack[w] {
                    lowlink[v] = lowlink[v].min(index[w]);
                }
            } else {
                frames.pop();
                if let Some(parent) = frames.last() {
                    let p = parent.0;
                    lowlink[p] = lowlink[p].min(lowlink[v]);
                }
                if lowlink[v] == index[v] {
                    let mut comp = Vec::new();
                    loop {
                        let w = stack.pop().expect("tarjan stack underflow");
                        on_stack[w] = false;
                        comp.push(w);
                        if w == v {
                            break;
                        }
                    }
                    comp.sort_unstable();
                    components.push(comp);
                }
            }
        }
    }
    components
}

/// Strongly connected components with no edge leaving them: the recurrent
/// classes of a finite chain. Sorted by smallest member for determinism.
pub(crate) fn recurrent_classes(adj: &[Vec<usize>]) -> Vec<Vec<usize>> {
    let sccs = strongly_connected_components(adj);
    let mut comp_of = vec![0usize; adj.len()];
    for (c, comp) in sccs.iter().enumerate() {
        for &v in comp {
            comp_of[v] = c;
        }
    }
    let mut closed: Vec<Vec<usize>> = sccs
        .into_iter()
        .enumerate()
        .filter(|(c, comp)| {
            comp.iter()
                .all(|&v| adj[v].iter().all(|&w| comp_of[w] == *c))
        })
        .map(|(_, comp)| comp)
        .collect();
    closed.sort_by_key(|comp| comp[0]);
    closed
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_graph_reachability() {
        let adj = vec![vec![1], vec![2], vec![]];
        assert_eq!(reachable_from(&adj, 0), vec![true, true, true]);
        assert_eq!(reachable_from(&adj, 1), vec![false, true, true]);
    }

    #[test]
    fn two_cycles_and_a_bridge() {
        // 0 <-> 1 -> 2 <-> 3; {2,3} is the unique recurrent class.
        let adj = vec![vec![1], vec![0, 2], vec![3], vec![2]];
        let sccs = strongly_connected_components(&adj);
        assert_eq!(sccs.len(), 2);
        let rec = recurrent_classes(&adj);
        assert_eq!(rec, vec![vec![2, 3]]);
    }

    #[test]
    fn two_absorbing_states() {
        let adj = vec![vec![1, 2], vec![], vec![]];
        let rec = recurrent_classes(&adj);
        assert_eq!(rec, vec![vec![1], vec![2]]);
    }

    #[test]
    fn single_cycle_is_one_class() {
        let adj = vec![vec![1], vec![2], vec![0]];
        let rec = recurrent_classes(&adj);
        assert_eq!(rec, vec![vec![0, 1, 2]]);
    }
}
