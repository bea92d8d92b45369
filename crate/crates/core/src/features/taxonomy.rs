use std::collections::{HashMap, HashSet};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum TaxonomyError {
    #[error("line {line}: expected `child<TAB>parent`")]
    Syntax { line: usize },
    #[error("no root (a node that is its own parent)")]
    NoRoot,
    #[error("more than one root: {0} and {1}")]
    MultipleRoots(String, String),
    #[error("node {0} has two parents")]
    DuplicateChild(String),
    #[error("parent {parent} of {child} is not declared")]
    UnknownParent { child: String, parent: String },
    #[error("cycle through {0}")]
    Cycle(String),
    #[error("unknown label {0}")]
    UnknownLabel(String),
}

/// Single-rooted is-a hierarchy. Depth of the root is 1.
#[derive(Debug, Clone, PartialEq)]
pub struct Taxonomy {
    parent: HashMap<String, String>,
    depth: HashMap<String, usize>,
    root: String,
}

impl Taxonomy {
    pub fn parse_tsv(text: &str) -> Result<Self, TaxonomyError> {
        let mut edges = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let mut cols = line.split('\t');
            match (cols.next(), cols.next()) {
                (Some(c), Some(p)) if !c.trim().is_empty() && !p.trim().is_empty() => {
                    edges.push((c.trim().to_string(), p.trim().to_string()))
                }
                _ => return Err(TaxonomyError::Syntax { line: i + 1 }),
            }
        }
        Self::from_edges(edges)
    }

    pub fn from_edges<I>(edges: I) -> Result<Self, TaxonomyError>
    where
        I: IntoIterator<Item = (String, String)>,
    {
        let mut parent = HashMap::new();
        let mut root: Option<String> = None;
        for (child, par) in edges {
            if child == par {
                if let Some(r) = &root {
                    if *r != child {
                        return Err(TaxonomyError::MultipleRoots(r.clone(), child));
                    }
                }
                root = Some(child.clone());
            }
            if parent.insert(child.clone(), par).is_some() {
                return Err(TaxonomyError::DuplicateChild(child));
            }
        }
        let root = root.ok_or(TaxonomyError::NoRoot)?;
        for (c, p) in &parent {
            if !parent.contains_key(p) {
                return Err(TaxonomyError::UnknownParent {
                    child: c.clone(),
                    parent: p.clone(),
                });
            }
        }
        let mut depth = HashMap::new();
        depth.insert(root.clone(), 1);
        let mut names: Vec<&String> = parent.keys().collect();
        names.sort();
        for name in names {
            let mut chain = vec![name.clone()];
            let mut seen = HashSet::new();
            let mut cur = name;
            while !depth.contains_key(cur) {
                if !seen.insert(cur.clone()) {
                    return Err(TaxonomyError::Cycle(cur.clone()));
                }
                cur = &parent[cur];
                chain.push(cur.clone());
            }
            let mut d = depth[cur];
            chain.pop();
            for n in chain.into_iter().rev() {
                d += 1;
                depth.insert(n, d);
            }
        }
        Ok(Self {
            parent,
            depth,
            root,
        })
    }

    pub fn root(&self) -> &str {
        &self.root
    }

    pub fn contains(&self, label: &str) -> bool {
        self.parent.contains_key(label)
    }

    pub fn depth(&self, label: &str) -> Result<usize, TaxonomyError> {
        self.depth
            .get(label)
            .copied()
            .ok_or_else(|| TaxonomyError::UnknownLabel(label.to_string()))
    }

    /// The label followed by its ancestors up to the root.
    pub fn ancestors<'a>(&'a self, label: &'a str) -> Result<Vec<&'a str>, TaxonomyError> {
        if !self.contains(label) {
            return Err(TaxonomyError::UnknownLabel(label.to_string()));
        }
        let mut out = vec![label];
        let mut cur = label;
        while cur != self.root {
            cur = &self.parent[cur];
            out.push(cur);
        }
        Ok(out)
    }

    pub fn lowest_common_subsumer<'a>(
        &'a self,
        a: &'a str,
        b: &'a str,
    ) -> Result<&'a str, TaxonomyError> {
        let above_a: HashSet<&str> = self.ancestors(a)?.into_iter().collect();
        let found = self
            .ancestors(b)?
            .into_iter()
            .find(|n| above_a.contains(n))
            .expect("all nodes share the root");
        Ok(found)
    }

    /// Wu-Palmer similarity: `2·depth(lcs) / (depth(a) + depth(b))`.
    pub fn wup_similarity(&self, a: &str, b: &str) -> Result<f64, TaxonomyError> {
        let lcs = self.lowest_common_subsumer(a, b)?;
        let (da, db, dl) = (self.depth(a)?, self.depth(b)?, self.depth(lcs)?);
        Ok(2.0 * dl as f64 / (da + db) as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const TREE: &str = "entity\tentity\nobject\tentity\nartifact\tobject\nfood\tobject\ncontainer\tartifact\nbowl\tcontainer\ncup\tcontainer\nfruit\tfood\napple\tfruit\n";

    #[test]
    fn depths_and_similarity() {
        let t = Taxonomy::parse_tsv(TREE).unwrap();
        assert_eq!(t.depth("entity").unwrap(), 1);
        assert_eq!(t.depth("bowl").unwrap(), 5);
        assert_eq!(t.wup_similarity("bowl", "bowl").unwrap(), 1.0);
        // siblings at depth 3 under a depth-2 parent
        assert!((t.wup_similarity("artifact", "food").unwrap() - 2.0 / 3.0).abs() < 1e-12);
        assert!((t.wup_similarity("bowl", "cup").unwrap() - 0.8).abs() < 1e-12);
        assert!((t.wup_similarity("bowl", "apple").unwrap() - 0.4).abs() < 1e-12);
        assert_eq!(t.wup_similarity("object", "entity").unwrap(), 2.0 / 3.0);
    }

    #[test]
    fn half_similarity() {
        let t = Taxonomy::parse_tsv("r\tr\na\tr\nb\ta\nc\tr\nd\tc\ne\td\n").unwrap();
        // two depth-2 nodes meeting at the root
        assert_eq!(t.wup_similarity("a", "c").unwrap(), 0.5);
    }

    #[test]
    fn structural_errors() {
        assert_eq!(Taxonomy::parse_tsv("a\tb\nb\ta\n").unwrap_err(), TaxonomyError::NoRoot);
        assert!(matches!(
            Taxonomy::parse_tsv("r\tr\ns\ts\n"),
            Err(TaxonomyError::MultipleRoots(..))
        ));
        assert!(matches!(
            Taxonomy::parse_tsv("r\tr\na\tx\n"),
            Err(TaxonomyError::UnknownParent { .. })
        ));
        assert!(matches!(
            Taxonomy::parse_tsv("r\tr\na\tb\nb\ta\n"),
            Err(TaxonomyError::Cycle(_))
        ));
        let t = Taxonomy::parse_tsv(TREE).unwrap();
        assert!(matches!(t.wup_similarity("bowl", "ghost"), Err(TaxonomyError::UnknownLabel(_))));
    }

    proptest! {
        #[test]
        fn symmetric_and_bounded(i in 0usize..9, j in 0usize..9) {
            let t = Taxonomy::parse_tsv(TREE).unwrap();
            let names = ["entity", "object", "artifact", "food", "container", "bowl", "cup", "fruit", "apple"];
            let s = t.wup_similarity(names[i], names[j]).unwrap();
            prop_assert_eq!(s, t.wup_similarity(names[j], names[i]).unwrap());
            prop_assert!(s > 0.0 && s <= 1.0);
            prop_assert_eq!(s == 1.0, i == j);
        }
    }
}
