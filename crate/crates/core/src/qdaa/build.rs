use indexmap::IndexSet;
use rayon::prelude::*;

use super::successors::Explorer;
use super::{Diagnostics, Edge, Node, Provenance, Qdaa, QdaaError, QdaaState, RunConfig, Successor};
use crate::model::BiochemicalSystem;

/// Breadth-first exploration from the initial rectangles. Each level's
/// successors are computed in parallel and merged in frontier order, so the
/// result does not depend on the number of worker threads.
pub fn build_reachable(system: &BiochemicalSystem, cfg: &RunConfig) -> Result<Qdaa, QdaaError> {
    cfg.validate()?;
    let explorer = Explorer::new(system, cfg);
    let mut index: IndexSet<Node> = IndexSet::new();
    let mut edges: Vec<Vec<Edge>> = Vec::new();
    let mut diagnostics = Diagnostics::default();

    let mut frontier = Vec::new();
    for rect in system.initial() {
        let (id, fresh) = index.insert_full(Node::State(QdaaState::initial(rect.clone())));
        if fresh {
            edges.push(Vec::new());
            frontier.push(id);
        }
    }
    let initial = frontier.clone();
    let mut sink = None;

    while !frontier.is_empty() {
        let results: Vec<_> = frontier
            .par_iter()
            .map(|&id| match index.get_index(id) {
                Some(Node::State(s)) => explorer.successors(s),
                _ => unreachable!("only states are queued"),
            })
            .collect();
        let mut next = Vec::new();
        for (&id, res) in frontier.iter().zip(results) {
            let succ = res?;
            diagnostics.absorb(&succ.diagnostics);
            for (target, weight) in succ.edges {
                let is_sink = target == Successor::Sink;
                let node = match target {
                    Successor::State(s) => Node::State(s),
                    Successor::Sink => Node::Sink,
                };
                let (tid, fresh) = index.insert_full(node);
                if fresh {
                    edges.push(Vec::new());
                    if is_sink {
                        edges[tid].push(Edge { target: tid, weight: 1.0 });
                        sink = Some(tid);
                    } else {
                        next.push(tid);
                    }
                }
                edges[id].push(Edge { target: tid, weight });
            }
        }
        frontier = next;
    }

    let qdaa = Qdaa {
        nodes: index.into_iter().collect(),
        edges,
        initial,
        sink,
        provenance: Provenance {
            model_name: system.name.clone(),
            model_hash: system.content_hash(),
            var_names: system.names().to_vec(),
            partition: system.partition().clone(),
            config: *cfg,
        },
        diagnostics,
    };
    qdaa.check_invariants()?;
    Ok(qdaa)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::RectIndex;
    use crate::model::parse_model;
    use crate::qdaa::EntrySet;

    fn system(eqs: &str, xs: &str, init: &str) -> BiochemicalSystem {
        parse_model(&format!(
            "model t\nvar x\nvar y\n{eqs}\nthresholds x = {xs}\nthresholds y = 0 1\ninitrect {init}\n"
        ))
        .unwrap()
    }

    fn cfg(kappa: usize, sims: usize) -> RunConfig {
        RunConfig {
            kappa,
            sims,
            seed: 1,
            ..Default::default()
        }
    }

    #[test]
    fn zero_field_has_two_states() {
        let s = system("eq x = 0\neq y = 0", "0 1 2", "0 0");
        let q = build_reachable(&s, &cfg(3, 4)).unwrap();
        assert_eq!(q.nodes.len(), 2);
        assert_eq!(q.edges[0], vec![Edge { target: 1, weight: 1.0 }]);
        assert_eq!(q.edges[1], vec![Edge { target: 1, weight: 1.0 }]);
        assert_eq!(q.sink, None);
        let st = crate::qdaa::memory_stats(&q);
        assert_eq!((st.rects, st.rho), (1, 2.0));
    }

    #[test]
    fn uniform_sweep_along_strip() {
        let s = system("eq x = 1\neq y = 0", "0 1 2 3 4 5", "0 0");
        let q = build_reachable(&s, &cfg(2, 5)).unwrap();
        // five rectangles plus the sink
        assert_eq!(q.nodes.len(), 6);
        for (i, row) in q.edges.iter().enumerate() {
            assert_eq!(row.len(), 1);
            assert_eq!(row[0].weight, 1.0);
            if i < 5 {
                assert_eq!(row[0].target, i + 1);
            }
        }
        assert_eq!(q.sink, Some(5));
        match &q.nodes[3] {
            Node::State(st) => {
                assert_eq!(st.rect, RectIndex::new(vec![3, 0]));
                assert!(matches!(&st.entry, EntrySet::FacetTiles { axis: 0, .. }));
            }
            Node::Sink => panic!(),
        }
        let b = crate::qdaa::variable_bounds(&q);
        assert_eq!(b, vec![(0.0, 5.0), (0.0, 1.0)]);
    }

    #[test]
    fn deterministic_across_thread_counts() {
        let s = parse_model(
            "model osc\nvar x\nvar y\neq x = 5*x - x*y\neq y = 0.4*x*y - 5.4*y\n\
             thresholds x = 12 14 16 18 20 22 24\nthresholds y = 2 3 4 5 6 7 8\ninitrect 4 3\n",
        )
        .unwrap();
        let c = cfg(3, 4);
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| build_reachable(&s, &c).unwrap())
        };
        let a = run(1);
        let b = run(4);
        assert_eq!(a, b);
        assert!(a.nodes.len() > 2);
    }
}
