//! Forget-set specifications.
//!
//! A spec is either a literal list of IDs (one per line) or a directive
//! resolved against a core ranking:
//!
//! ```text
//! top-k:<k>
//! non-top-k:<k>
//! random:<n>:<seed>:<pool>     # pool is itself a directive, e.g. non-top-k:3000
//! all | none
//! a+b                           # union of two directives
//! ```

use std::fmt;
use std::path::Path;

use super::{DataError, IdSet, SampleId};
use crate::ranking::CoreRanking;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ForgetSpec {
    Ids(IdSet),
    TopK(usize),
    NonTopK(usize),
    Random {
        n: usize,
        seed: u64,
        pool: Box<ForgetSpec>,
    },
    All,
    None,
    Union(Vec<ForgetSpec>),
}

fn bad(msg: impl Into<String>) -> DataError {
    DataError::ForgetSpec(msg.into())
}

fn parse_num<T: std::str::FromStr>(s: &str, what: &str) -> Result<T, DataError> {
    s.trim()
        .parse()
        .map_err(|_| bad(format!("expected integer {what}, got {s:?}")))
}

impl ForgetSpec {
    /// Parses a single directive (possibly a `+` union).
    pub fn parse_directive(text: &str) -> Result<ForgetSpec, DataError> {
        let text = text.trim();
        if text.contains('+') {
            let parts = text
                .split('+')
                .map(Self::parse_term)
                .collect::<Result<Vec<_>, _>>()?;
            return Ok(ForgetSpec::Union(parts));
        }
        Self::parse_term(text)
    }

    fn parse_term(text: &str) -> Result<ForgetSpec, DataError> {
        let text = text.trim();
        if text == "all" {
            return Ok(ForgetSpec::All);
        }
        if text == "none" || text.is_empty() {
            return Ok(ForgetSpec::None);
        }
        if let Some(k) = text.strip_prefix("top-k:") {
            return Ok(ForgetSpec::TopK(parse_num(k, "k")?));
        }
        if let Some(k) = text.strip_prefix("non-top-k:") {
            return Ok(ForgetSpec::NonTopK(parse_num(k, "k")?));
        }
        if let Some(rest) = text.strip_prefix("random:") {
            let mut parts = rest.splitn(3, ':');
            let n = parse_num(parts.next().unwrap_or(""), "n")?;
            let seed = parse_num(parts.next().ok_or_else(|| bad("random: missing seed"))?, "seed")?;
            let pool = parts.next().ok_or_else(|| bad("random: missing pool"))?;
            return Ok(ForgetSpec::Random {
                n,
                seed,
                pool: Box::new(Self::parse_term(pool)?),
            });
        }
        Err(bad(format!("unrecognised directive {text:?}")))
    }

    /// Parses file contents: either newline-separated IDs or one directive.
    /// Blank lines and `#` comments are ignored.
    pub fn parse(text: &str) -> Result<ForgetSpec, DataError> {
        let lines: Vec<&str> = text
            .lines()
            .map(|l| l.split('#').next().unwrap_or("").trim())
            .filter(|l| !l.is_empty())
            .collect();
        if lines.iter().all(|l| l.bytes().all(|b| b.is_ascii_digit())) {
            let ids = lines
                .iter()
                .map(|l| parse_num::<SampleId>(l, "id"))
                .collect::<Result<Vec<_>, _>>()?;
            return Ok(ForgetSpec::Ids(IdSet::from_unsorted(ids)));
        }
        match lines.as_slice() {
            [one] => Self::parse_directive(one),
            _ => Err(bad("a directive spec must be a single line")),
        }
    }

    pub fn from_file(path: &Path) -> Result<ForgetSpec, DataError> {
        let text = std::fs::read_to_string(path).map_err(|source| DataError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn needs_ranking(&self) -> bool {
        match self {
            ForgetSpec::TopK(_) | ForgetSpec::NonTopK(_) => true,
            ForgetSpec::Random { pool, .. } => pool.needs_ranking(),
            ForgetSpec::Union(parts) => parts.iter().any(Self::needs_ranking),
            _ => false,
        }
    }

    /// Resolves to concrete IDs within `universe`.
    pub fn resolve(&self, universe: &IdSet, ranking: Option<&CoreRanking>) -> Result<IdSet, DataError> {
        let need_ranking = || ranking.ok_or_else(|| bad("directive needs a core ranking"));
        let resolved = match self {
            ForgetSpec::Ids(ids) => {
                if let Some(id) = ids.iter().find(|&id| !universe.contains(id)) {
                    return Err(DataError::UnknownId(id));
                }
                ids.clone()
            }
            ForgetSpec::TopK(k) => need_ranking()?
                .top_k(*k)
                .map_err(|e| bad(e.to_string()))?
                .intersection(universe),
            ForgetSpec::NonTopK(k) => need_ranking()?
                .non_top_k(*k)
                .map_err(|e| bad(e.to_string()))?
                .intersection(universe),
            ForgetSpec::Random { n, seed, pool } => pool.resolve(universe, ranking)?.sample(*n, *seed)?,
            ForgetSpec::All => universe.clone(),
            ForgetSpec::None => IdSet::new(),
            ForgetSpec::Union(parts) => {
                let mut acc = IdSet::new();
                for p in parts {
                    acc = acc.union(&p.resolve(universe, ranking)?);
                }
                acc
            }
        };
        Ok(resolved)
    }
}

impl fmt::Display for ForgetSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ForgetSpec::Ids(ids) => write!(f, "ids({})", ids.len()),
            ForgetSpec::TopK(k) => write!(f, "top-k:{k}"),
            ForgetSpec::NonTopK(k) => write!(f, "non-top-k:{k}"),
            ForgetSpec::Random { n, seed, pool } => write!(f, "random:{n}:{seed}:{pool}"),
            ForgetSpec::All => write!(f, "all"),
            ForgetSpec::None => write!(f, "none"),
            ForgetSpec::Union(parts) => {
                for (i, p) in parts.iter().enumerate() {
                    if i > 0 {
                        write!(f, "+")?;
                    }
                    write!(f, "{p}")?;
                }
                Ok(())
            }
        }
    }
}
