use codesat_core::codebook::{InitialCode, InterviewCodeSet, MatchSource};
use codesat_core::judge::{always_different, always_similar, SimilarityTable};
use codesat_core::metrics::its_ratio;
use codesat_core::reducer::{reduce, reduce_with_checkpoints, resume, Frontier};
use proptest::prelude::*;

/// A code is a vocabulary index plus whether its name is upper-cased.
#[derive(Debug, Clone)]
struct Instance {
    sets: Vec<Vec<(usize, bool)>>,
    vocab: usize,
    similar: Vec<Vec<bool>>,
}

fn text(i: usize) -> (String, String) {
    (format!("code {i}"), format!("meaning number {i}"))
}

fn instance() -> impl Strategy<Value = Instance> {
    (2usize..10).prop_flat_map(|vocab| {
        let sets = prop::collection::vec(prop::collection::vec((0..vocab, any::<bool>()), 1..=6), 1..=8);
        let rel = prop::collection::vec(prop::collection::vec(any::<bool>(), vocab), vocab);
        (sets, rel).prop_map(move |(sets, rel)| {
            let mut similar = vec![vec![false; vocab]; vocab];
            for a in 0..vocab {
                for b in a + 1..vocab {
                    similar[a][b] = rel[a][b];
                    similar[b][a] = rel[a][b];
                }
            }
            Instance { sets, vocab, similar }
        })
    })
}

fn build(inst: &Instance) -> (Vec<InterviewCodeSet>, SimilarityTable) {
    let sets = inst
        .sets
        .iter()
        .enumerate()
        .map(|(k, codes)| {
            let codes = codes
                .iter()
                .map(|&(i, upper)| {
                    let (n, d) = text(i);
                    let n = if upper { n.to_uppercase() } else { n };
                    InitialCode::new(n, d, format!("quote {k}")).unwrap()
                })
                .collect();
            InterviewCodeSet::new(format!("i{k}"), k + 1, codes).unwrap()
        })
        .collect();
    let mut table = SimilarityTable::new();
    for a in 0..inst.vocab {
        for b in a + 1..inst.vocab {
            if inst.similar[a][b] {
                let (na, da) = text(a);
                let (nb, db) = text(b);
                table.insert(&format!("{na}. {da}"), &format!("{nb}. {db}"));
            }
        }
    }
    (sets, table)
}

/// Outcome of the straightforward fold: unique vocab ids, duplicates as
/// (vocab id, matched unique slot, exact?) and per-position counts.
#[derive(Debug, PartialEq)]
struct Folded {
    unique: Vec<usize>,
    dups: Vec<(usize, usize, bool)>,
    counts: Vec<(usize, usize)>,
}

fn oracle(inst: &Instance) -> Folded {
    let mut unique: Vec<usize> = Vec::new();
    let mut dups = Vec::new();
    let mut counts = Vec::new();
    let mut total = 0;
    for (k, set) in inst.sets.iter().enumerate() {
        for &(c, _) in set {
            total += 1;
            if k == 0 {
                unique.push(c);
            } else if let Some(slot) = unique.iter().position(|&u| u == c) {
                dups.push((c, slot, true));
            } else if let Some(slot) = unique.iter().position(|&u| inst.similar[u][c]) {
                dups.push((c, slot, false));
            } else {
                unique.push(c);
            }
        }
        counts.push((total, unique.len()));
    }
    Folded { unique, dups, counts }
}

fn vocab_id(code: &InitialCode) -> usize {
    code.name.to_lowercase().trim_start_matches("code ").parse().unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn reduce_matches_fold_oracle(inst in instance()) {
        let (sets, table) = build(&inst);
        let r = reduce(&sets, &table.into_judge()).unwrap();
        let got = Folded {
            unique: r.ucc.entries.iter().map(|e| vocab_id(&e.code)).collect(),
            dups: r
                .ucc
                .duplicates
                .iter()
                .map(|d| (vocab_id(&d.duplicate), d.matched_unique_index.unwrap(), d.via == MatchSource::ExactMatch))
                .collect(),
            counts: r.counts.iter().map(|c| (c.cumulative_total, c.cumulative_unique)).collect(),
        };
        prop_assert_eq!(&got, &oracle(&inst));
        prop_assert_eq!(r.ucc.len() + r.ucc.duplicates.len(), r.tcc.len());
        let its = its_ratio(r.ucc.len(), r.tcc.len()).unwrap();
        prop_assert!(its >= 1.0 / r.tcc.len() as f64 && its <= 1.0);
        prop_assert_eq!(its == 1.0, r.ucc.duplicates.is_empty());
    }

    #[test]
    fn resume_from_any_checkpoint_matches(inst in instance()) {
        let (sets, table) = build(&inst);
        let judge = table.into_judge();
        let mut checkpoints: Vec<Frontier> = Vec::new();
        let full = reduce_with_checkpoints(&sets, &judge, None, &mut |f| {
            checkpoints.push(f.clone());
            Ok(())
        })
        .unwrap();
        prop_assert_eq!(checkpoints.len(), sets.len());
        for f in checkpoints {
            prop_assert_eq!(&resume(f, &sets, &judge).unwrap(), &full);
        }
    }

    #[test]
    fn degenerate_judges(inst in instance()) {
        let (sets, _) = build(&inst);
        let distinct = reduce(&sets, &always_different()).unwrap();
        prop_assert!(distinct.ucc.duplicates.iter().all(|d| d.via == MatchSource::ExactMatch));
        let merged = reduce(&sets, &always_similar()).unwrap();
        prop_assert_eq!(merged.ucc.len(), sets[0].codes.len());
    }
}
