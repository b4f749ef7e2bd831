use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{Corpus, RoleKind};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoleStats {
    /// Instances with at least one span of the role.
    pub instances: usize,
    /// Total number of spans.
    pub fillers: usize,
    /// Mean filler length in tokens, over fillers only.
    pub mean_length: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub name: String,
    pub instances: usize,
    pub mean_length: f64,
    /// Roles without any span are absent from the map.
    pub roles: BTreeMap<RoleKind, RoleStats>,
}

pub fn compute_stats(corpus: &Corpus) -> CorpusStats {
    let total_tokens: usize = corpus.instances.iter().map(|i| i.tokens.len()).sum();
    let mut roles = BTreeMap::new();
    for role in RoleKind::ALL {
        let mut instances = 0;
        let mut fillers = 0;
        let mut filler_tokens = 0;
        for inst in &corpus.instances {
            let spans = inst.spans(role);
            if !spans.is_empty() {
                instances += 1;
            }
            fillers += spans.len();
            filler_tokens += spans.iter().map(|s| s.len()).sum::<usize>();
        }
        if fillers > 0 {
            roles.insert(
                role,
                RoleStats {
                    instances,
                    fillers,
                    mean_length: filler_tokens as f64 / fillers as f64,
                },
            );
        }
    }
    CorpusStats {
        name: corpus.name.clone(),
        instances: corpus.len(),
        mean_length: if corpus.is_empty() {
            0.0
        } else {
            total_tokens as f64 / corpus.len() as f64
        },
        roles,
    }
}

impl CorpusStats {
    /// Renders rows in the layout: dataset, whole instance (# and mean
    /// length), then stimulus, cue, target, experiencer; `—` marks absent roles.
    pub fn render_table(rows: &[CorpusStats]) -> String {
        const ORDER: [RoleKind; 4] = [
            RoleKind::Stimulus,
            RoleKind::Cue,
            RoleKind::Target,
            RoleKind::Experiencer,
        ];
        let mut out = String::new();
        let _ = write!(out, "{:<20} {:>7} {:>8}", "Dataset", "#", "len");
        for role in ORDER {
            let _ = write!(out, " {:>12} {:>7}", format!("{role} #"), "len");
        }
        out.push('\n');
        for row in rows {
            let _ = write!(out, "{:<20} {:>7} {:>8.2}", row.name, row.instances, row.mean_length);
            for role in ORDER {
                match row.roles.get(&role) {
                    Some(s) => {
                        let _ = write!(out, " {:>12} {:>7.2}", s.instances, s.mean_length);
                    }
                    None => {
                        let _ = write!(out, " {:>12} {:>7}", "—", "—");
                    }
                }
            }
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{AnnotatedInstance, Span};

    #[test]
    fn single_instance() {
        let inst = AnnotatedInstance::new(
            "a",
            vec!["w".into(), "x".into(), "y".into(), "z".into()],
            "joy",
        )
        .with_role(RoleKind::Stimulus, vec![Span::new(2, 4)]);
        let stats = compute_stats(&Corpus::from_instances("toy", vec![inst]).unwrap());
        assert_eq!(stats.instances, 1);
        assert_eq!(stats.mean_length, 4.0);
        let stim = &stats.roles[&RoleKind::Stimulus];
        assert_eq!((stim.instances, stim.fillers, stim.mean_length), (1, 1, 2.0));
        assert!(!stats.roles.contains_key(&RoleKind::Cue));
        let table = CorpusStats::render_table(&[stats]);
        assert!(table.contains('—'));
    }

    #[test]
    fn spanless_role_is_absent() {
        let inst = AnnotatedInstance::new("a", vec!["w".into()], "joy")
            .with_role(RoleKind::Experiencer, vec![]);
        let stats = compute_stats(&Corpus::from_instances("toy", vec![inst]).unwrap());
        assert!(stats.roles.is_empty());
    }

    #[test]
    fn empty_corpus() {
        let stats = compute_stats(&Corpus::from_instances("e", vec![]).unwrap());
        assert_eq!(stats.instances, 0);
        assert_eq!(stats.mean_length, 0.0);
    }
}
