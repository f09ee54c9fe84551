//! Knowledge-graph storage and queries: triples, the taxonomy sub-relation,
//! least-common-subsumer distances and n-hop neighbourhoods.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt;
use std::fs;
use std::io::{self, BufRead, BufReader};
use std::path::Path;

use thiserror::Error;

use crate::text::normalize_label;

pub const DEFAULT_TAXONOMY_PREDICATE: &str = "isa";

#[derive(Debug, Error)]
pub enum KgError {
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("taxonomy cycle through {}", members.join(" -> "))]
    TaxonomyCycle { members: Vec<String> },
    #[error("unknown concept {0}")]
    UnknownConcept(String),
    #[error("seed set is empty")]
    EmptySeeds,
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Index into a graph's concept table. Ids are assigned in sorted label
/// order, so identical inputs always produce identical ids.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ConceptId(pub u32);

impl ConceptId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for ConceptId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "c{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Triple {
    pub subject: ConceptId,
    pub predicate: String,
    pub object: ConceptId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TripleFormat {
    /// `subject<TAB>predicate<TAB>object`, `#` comments, blank lines ignored.
    Tsv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GraphStats {
    pub concepts: usize,
    pub triples: usize,
    /// Longest chain of taxonomy edges.
    pub taxonomy_depth: usize,
}

impl fmt::Display for GraphStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "concepts: {}", self.concepts)?;
        writeln!(f, "triples: {}", self.triples)?;
        write!(f, "taxonomy depth: {}", self.taxonomy_depth)
    }
}

/// Immutable triple store. Build a new graph to change it.
#[derive(Debug, Clone)]
pub struct KnowledgeGraph {
    labels: Vec<String>,
    index: HashMap<String, ConceptId>,
    triples: Vec<Triple>,
    taxonomy_predicate: String,
    neighbors: Vec<Vec<ConceptId>>,
    parents: Vec<Vec<ConceptId>>,
}

impl KnowledgeGraph {
    /// Builds a graph from labelled triples. Labels and predicates are
    /// normalized, duplicates dropped, and the taxonomy checked for cycles.
    pub fn from_label_triples<I, S>(triples: I, taxonomy_predicate: &str) -> Result<Self, KgError>
    where
        I: IntoIterator<Item = (S, S, S)>,
        S: AsRef<str>,
    {
        let raw: Vec<(String, String, String)> = triples
            .into_iter()
            .map(|(s, p, o)| {
                (
                    normalize_label(s.as_ref()),
                    normalize_label(p.as_ref()),
                    normalize_label(o.as_ref()),
                )
            })
            .collect();
        for (i, (s, p, o)) in raw.iter().enumerate() {
            if s.is_empty() || p.is_empty() || o.is_empty() {
                return Err(KgError::Malformed {
                    line: i + 1,
                    message: "empty field".into(),
                });
            }
        }
        Self::assemble(raw, normalize_label(taxonomy_predicate))
    }

    fn assemble(raw: Vec<(String, String, String)>, taxonomy_predicate: String) -> Result<Self, KgError> {
        let labels: Vec<String> = raw
            .iter()
            .flat_map(|(s, _, o)| [s.clone(), o.clone()])
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let index: HashMap<String, ConceptId> = labels
            .iter()
            .enumerate()
            .map(|(i, l)| (l.clone(), ConceptId(i as u32)))
            .collect();
        let triples: Vec<Triple> = raw
            .into_iter()
            .map(|(s, p, o)| Triple {
                subject: index[&s],
                predicate: p,
                object: index[&o],
            })
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();

        let n = labels.len();
        let mut neighbor_sets = vec![BTreeSet::new(); n];
        let mut parent_sets = vec![BTreeSet::new(); n];
        for t in &triples {
            neighbor_sets[t.subject.index()].insert(t.object);
            neighbor_sets[t.object.index()].insert(t.subject);
            if t.predicate == taxonomy_predicate {
                parent_sets[t.subject.index()].insert(t.object);
            }
        }
        let graph = Self {
            labels,
            index,
            triples,
            taxonomy_predicate,
            neighbors: neighbor_sets.into_iter().map(|s| s.into_iter().collect()).collect(),
            parents: parent_sets.into_iter().map(|s| s.into_iter().collect()).collect(),
        };
        if let Some(cycle) = graph.find_taxonomy_cycle() {
            return Err(KgError::TaxonomyCycle {
                members: cycle.into_iter().map(|c| graph.labels[c.index()].clone()).collect(),
            });
        }
        Ok(graph)
    }

    pub fn parse_tsv(reader: impl BufRead, taxonomy_predicate: &str) -> Result<Self, KgError> {
        let mut raw = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            let lineno = i + 1;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 {
                return Err(KgError::Malformed {
                    line: lineno,
                    message: format!("expected 3 tab-separated fields, found {}", fields.len()),
                });
            }
            let [s, p, o] = [fields[0], fields[1], fields[2]].map(normalize_label);
            if s.is_empty() || p.is_empty() || o.is_empty() {
                return Err(KgError::Malformed {
                    line: lineno,
                    message: "empty subject, predicate or object".into(),
                });
            }
            raw.push((s, p, o));
        }
        Self::assemble(raw, normalize_label(taxonomy_predicate))
    }

    pub fn load(path: &Path, format: TripleFormat, taxonomy_predicate: &str) -> Result<Self, KgError> {
        match format {
            TripleFormat::Tsv => Self::parse_tsv(BufReader::new(fs::File::open(path)?), taxonomy_predicate),
        }
    }

    /// Triples as sorted TSV lines with normalized labels.
    pub fn to_tsv(&self) -> String {
        let mut lines: Vec<String> = self
            .triples
            .iter()
            .map(|t| format!("{}\t{}\t{}", self.label(t.subject), t.predicate, self.label(t.object)))
            .collect();
        lines.sort();
        let mut out = lines.join("\n");
        if !out.is_empty() {
            out.push('\n');
        }
        out
    }

    pub fn concept_count(&self) -> usize {
        self.labels.len()
    }

    pub fn concepts(&self) -> impl Iterator<Item = ConceptId> + '_ {
        (0..self.labels.len() as u32).map(ConceptId)
    }

    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    pub fn taxonomy_predicate(&self) -> &str {
        &self.taxonomy_predicate
    }

    pub fn label(&self, id: ConceptId) -> &str {
        &self.labels[id.index()]
    }

    pub fn concept(&self, label: &str) -> Option<ConceptId> {
        self.index.get(&normalize_label(label)).copied()
    }

    pub fn contains(&self, id: ConceptId) -> bool {
        id.index() < self.labels.len()
    }

    pub fn neighbors(&self, id: ConceptId) -> &[ConceptId] {
        &self.neighbors[id.index()]
    }

    pub fn parents(&self, id: ConceptId) -> &[ConceptId] {
        &self.parents[id.index()]
    }

    pub fn predicates(&self) -> BTreeSet<String> {
        self.triples.iter().map(|t| t.predicate.clone()).collect()
    }

    fn check(&self, id: ConceptId) -> Result<(), KgError> {
        if self.contains(id) {
            Ok(())
        } else {
            Err(KgError::UnknownConcept(id.to_string()))
        }
    }

    pub fn stats(&self) -> GraphStats {
        // longest[c] = longest taxonomy chain starting at c
        let mut longest: Vec<Option<usize>> = vec![None; self.labels.len()];
        fn depth(g: &KnowledgeGraph, c: ConceptId, memo: &mut Vec<Option<usize>>) -> usize {
            if let Some(d) = memo[c.index()] {
                return d;
            }
            let d = g
                .parents(c)
                .iter()
                .map(|&p| 1 + depth(g, p, memo))
                .max()
                .unwrap_or(0);
            memo[c.index()] = Some(d);
            d
        }
        let taxonomy_depth = self
            .concepts()
            .map(|c| depth(self, c, &mut longest))
            .max()
            .unwrap_or(0);
        GraphStats {
            concepts: self.labels.len(),
            triples: self.triples.len(),
            taxonomy_depth,
        }
    }

    fn find_taxonomy_cycle(&self) -> Option<Vec<ConceptId>> {
        #[derive(Clone, Copy, PartialEq)]
        enum Mark {
            New,
            Open,
            Done,
        }
        let mut mark = vec![Mark::New; self.labels.len()];
        for root in self.concepts() {
            if mark[root.index()] != Mark::New {
                continue;
            }
            // (node, next parent index to visit)
            let mut stack: Vec<(ConceptId, usize)> = vec![(root, 0)];
            mark[root.index()] = Mark::Open;
            while let Some(&mut (node, ref mut next)) = stack.last_mut() {
                let parents = &self.parents[node.index()];
                if *next < parents.len() {
                    let p = parents[*next];
                    *next += 1;
                    match mark[p.index()] {
                        Mark::New => {
                            mark[p.index()] = Mark::Open;
                            stack.push((p, 0));
                        }
                        Mark::Open => {
                            let start = stack.iter().position(|&(c, _)| c == p).unwrap();
                            return Some(stack[start..].iter().map(|&(c, _)| c).collect());
                        }
                        Mark::Done => {}
                    }
                } else {
                    mark[node.index()] = Mark::Done;
                    stack.pop();
                }
            }
        }
        None
    }

    /// Hop distance from `id` to every taxonomy ancestor, itself included at 0.
    pub fn ancestors(&self, id: ConceptId) -> BTreeMap<ConceptId, u32> {
        let mut dist = BTreeMap::from([(id, 0)]);
        let mut queue = VecDeque::from([id]);
        while let Some(c) = queue.pop_front() {
            let d = dist[&c];
            for &p in self.parents(c) {
                dist.entry(p).or_insert_with(|| {
                    queue.push_back(p);
                    d + 1
                });
            }
        }
        dist
    }

    /// Least-common-subsumer distance: `hops(a, s) + hops(b, s)` minimized
    /// over every common taxonomy ancestor `s`. `None` when the two concepts
    /// share no ancestor.
    pub fn lcs_distance(&self, a: ConceptId, b: ConceptId) -> Result<Option<u32>, KgError> {
        self.check(a)?;
        self.check(b)?;
        if a == b {
            return Ok(Some(0));
        }
        let up_a = self.ancestors(a);
        let up_b = self.ancestors(b);
        Ok(up_a
            .iter()
            .filter_map(|(s, da)| up_b.get(s).map(|db| da + db))
            .min())
    }

    /// All triples whose endpoints both lie within `n` undirected hops of some
    /// seed, i.e. the subgraph induced by the n-hop ball.
    pub fn n_hop_neighborhood(&self, seeds: &BTreeSet<ConceptId>, n: u32) -> Result<SubKG, KgError> {
        if seeds.is_empty() {
            return Err(KgError::EmptySeeds);
        }
        for &s in seeds {
            self.check(s)?;
        }
        let mut depth: BTreeMap<ConceptId, u32> = seeds.iter().map(|&s| (s, 0)).collect();
        let mut queue: VecDeque<ConceptId> = seeds.iter().copied().collect();
        while let Some(c) = queue.pop_front() {
            let d = depth[&c];
            if d == n {
                continue;
            }
            for &nb in self.neighbors(c) {
                depth.entry(nb).or_insert_with(|| {
                    queue.push_back(nb);
                    d + 1
                });
            }
        }
        let triples = self
            .triples
            .iter()
            .filter(|t| depth.contains_key(&t.subject) && depth.contains_key(&t.object))
            .cloned()
            .collect();
        Ok(SubKG {
            triples,
            depth,
            hop_bound: n,
        })
    }
}

/// A subset of a parent graph's triples plus the hop depth at which each
/// concept was reached.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SubKG {
    pub triples: BTreeSet<Triple>,
    pub depth: BTreeMap<ConceptId, u32>,
    pub hop_bound: u32,
}

impl SubKG {
    pub fn concepts(&self) -> impl Iterator<Item = ConceptId> + '_ {
        self.depth.keys().copied()
    }

    pub fn contains_concept(&self, c: ConceptId) -> bool {
        self.depth.contains_key(&c)
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty() && self.depth.is_empty()
    }

    pub fn to_tsv(&self, kg: &KnowledgeGraph) -> String {
        self.triples
            .iter()
            .map(|t| format!("{}\t{}\t{}\n", kg.label(t.subject), t.predicate, kg.label(t.object)))
            .collect()
    }
}
