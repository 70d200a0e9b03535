//! Discrete graphical models stored in log space, and the UAI text format.

use std::fmt::Write as _;

use thiserror::Error;

/// Marker for a variable that has not been assigned yet.
pub const UNASSIGNED: usize = usize::MAX;

#[derive(Debug, Error, PartialEq)]
pub enum ParseError {
    #[error("line {line}: {msg}")]
    Malformed { line: usize, msg: String },
    #[error("unexpected end of input: expected {0}")]
    UnexpectedEof(&'static str),
    #[error("line {line}: factor {factor} references variable {var} but the model has {n} variables")]
    ScopeOutOfRange {
        line: usize,
        factor: usize,
        var: usize,
        n: usize,
    },
    #[error("line {line}: factor {factor} declares {found} table entries, expected {expected}")]
    TableLength {
        line: usize,
        factor: usize,
        expected: usize,
        found: usize,
    },
}

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("factor {factor}: variable {var} out of range (n = {n})")]
    ScopeOutOfRange { factor: usize, var: usize, n: usize },
    #[error("factor {factor}: variable {var} appears twice in the scope")]
    DuplicateScopeVar { factor: usize, var: usize },
    #[error("factor {factor}: table has {found} entries, expected {expected}")]
    TableLength {
        factor: usize,
        expected: usize,
        found: usize,
    },
    #[error("variable {0} has an empty domain")]
    EmptyDomain(usize),
    #[error("factor {factor}: entry {index} is NaN or +inf")]
    BadEntry { factor: usize, index: usize },
}

/// A log-space function over an ordered scope. The table is row-major with
/// the last scope variable varying fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Factor {
    scope: Vec<usize>,
    strides: Vec<usize>,
    table: Vec<f64>,
}

impl Factor {
    /// Builds a factor; `domains` gives the cardinality of each scope variable
    /// in scope order.
    pub fn new(scope: Vec<usize>, domains: &[usize], table: Vec<f64>) -> Self {
        debug_assert_eq!(scope.len(), domains.len());
        let mut strides = vec![1; scope.len()];
        for i in (0..scope.len().saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * domains[i + 1];
        }
        Factor {
            scope,
            strides,
            table,
        }
    }

    pub fn scope(&self) -> &[usize] {
        &self.scope
    }

    pub fn table(&self) -> &[f64] {
        &self.table
    }

    pub fn arity(&self) -> usize {
        self.scope.len()
    }

    /// Table index for a full assignment vector (indexed by variable).
    #[inline]
    pub fn index_of(&self, assignment: &[usize]) -> usize {
        self.scope
            .iter()
            .zip(&self.strides)
            .map(|(&v, &s)| {
                debug_assert_ne!(assignment[v], UNASSIGNED, "scope variable {v} unassigned");
                assignment[v] * s
            })
            .sum()
    }

    #[inline]
    pub fn value(&self, assignment: &[usize]) -> f64 {
        self.table[self.index_of(assignment)]
    }
}

/// A set of nonnegative functions over discrete variables, held as natural
/// logs; `-inf` encodes a zero entry.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphicalModel {
    domains: Vec<usize>,
    factors: Vec<Factor>,
}

impl GraphicalModel {
    /// Validates and builds a model from log-space tables.
    pub fn new(domains: Vec<usize>, factors: Vec<(Vec<usize>, Vec<f64>)>) -> Result<Self, ModelError> {
        let n = domains.len();
        if let Some(v) = domains.iter().position(|&k| k == 0) {
            return Err(ModelError::EmptyDomain(v));
        }
        let mut built = Vec::with_capacity(factors.len());
        for (fi, (scope, table)) in factors.into_iter().enumerate() {
            let mut seen = vec![false; n];
            for &v in &scope {
                if v >= n {
                    return Err(ModelError::ScopeOutOfRange { factor: fi, var: v, n });
                }
                if std::mem::replace(&mut seen[v], true) {
                    return Err(ModelError::DuplicateScopeVar { factor: fi, var: v });
                }
            }
            let doms: Vec<usize> = scope.iter().map(|&v| domains[v]).collect();
            let expected: usize = doms.iter().product();
            if table.len() != expected {
                return Err(ModelError::TableLength {
                    factor: fi,
                    expected,
                    found: table.len(),
                });
            }
            if let Some(index) = table.iter().position(|x| x.is_nan() || *x == f64::INFINITY) {
                return Err(ModelError::BadEntry { factor: fi, index });
            }
            built.push(Factor::new(scope, &doms, table));
        }
        Ok(GraphicalModel {
            domains,
            factors: built,
        })
    }

    pub fn var_count(&self) -> usize {
        self.domains.len()
    }

    pub fn domains(&self) -> &[usize] {
        &self.domains
    }

    pub fn domain(&self, var: usize) -> usize {
        self.domains[var]
    }

    pub fn factors(&self) -> &[Factor] {
        &self.factors
    }

    pub fn max_domain(&self) -> usize {
        self.domains.iter().copied().max().unwrap_or(0)
    }

    /// Log-value of a complete assignment: the sum of every factor.
    pub fn log_value(&self, assignment: &[usize]) -> f64 {
        self.factors.iter().map(|f| f.value(assignment)).sum()
    }
}

struct Tokens<'a> {
    items: Vec<(usize, &'a str)>,
    pos: usize,
}

impl<'a> Tokens<'a> {
    fn new(text: &'a str) -> Self {
        let items = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim_start().starts_with('#'))
            .flat_map(|(i, l)| l.split_whitespace().map(move |t| (i + 1, t)))
            .collect();
        Tokens { items, pos: 0 }
    }

    fn next(&mut self, what: &'static str) -> Result<(usize, &'a str), ParseError> {
        let tok = self.items.get(self.pos).copied().ok_or(ParseError::UnexpectedEof(what))?;
        self.pos += 1;
        Ok(tok)
    }

    fn usize(&mut self, what: &'static str) -> Result<(usize, usize), ParseError> {
        let (line, tok) = self.next(what)?;
        tok.parse().map(|v| (line, v)).map_err(|_| ParseError::Malformed {
            line,
            msg: format!("expected {what}, found {tok:?}"),
        })
    }

    fn f64(&mut self, what: &'static str) -> Result<(usize, f64), ParseError> {
        let (line, tok) = self.next(what)?;
        tok.parse().map(|v| (line, v)).map_err(|_| ParseError::Malformed {
            line,
            msg: format!("expected {what}, found {tok:?}"),
        })
    }
}

/// Parses a UAI `MARKOV`/`BAYES` document; probabilities are converted to
/// natural logs and zeros become `-inf`.
pub fn parse_uai(text: &str) -> Result<GraphicalModel, ParseError> {
    let mut toks = Tokens::new(text);
    let (line, kind) = toks.next("network type")?;
    if !kind.eq_ignore_ascii_case("MARKOV") && !kind.eq_ignore_ascii_case("BAYES") {
        return Err(ParseError::Malformed {
            line,
            msg: format!("unsupported network type {kind:?}"),
        });
    }
    let (_, n) = toks.usize("variable count")?;
    let mut domains = Vec::with_capacity(n);
    for _ in 0..n {
        let (line, k) = toks.usize("domain size")?;
        if k == 0 {
            return Err(ParseError::Malformed {
                line,
                msg: "domain size must be at least 1".into(),
            });
        }
        domains.push(k);
    }
    let (_, m) = toks.usize("factor count")?;
    let mut scopes = Vec::with_capacity(m);
    for fi in 0..m {
        let (line, arity) = toks.usize("scope arity")?;
        let mut scope = Vec::with_capacity(arity);
        for _ in 0..arity {
            let (line, v) = toks.usize("scope variable")?;
            if v >= n {
                return Err(ParseError::ScopeOutOfRange {
                    line,
                    factor: fi,
                    var: v,
                    n,
                });
            }
            if scope.contains(&v) {
                return Err(ParseError::Malformed {
                    line,
                    msg: format!("factor {fi} repeats variable {v}"),
                });
            }
            scope.push(v);
        }
        scopes.push((line, scope));
    }
    let mut factors = Vec::with_capacity(m);
    for (fi, (_, scope)) in scopes.into_iter().enumerate() {
        let expected: usize = scope.iter().map(|&v| domains[v]).product();
        let (line, count) = toks.usize("table entry count")?;
        if count != expected {
            return Err(ParseError::TableLength {
                line,
                factor: fi,
                expected,
                found: count,
            });
        }
        let mut table = Vec::with_capacity(count);
        for _ in 0..count {
            let (line, p) = toks.f64("probability")?;
            if !p.is_finite() || p < 0.0 {
                return Err(ParseError::Malformed {
                    line,
                    msg: format!("table entry {p} is not a finite nonnegative value"),
                });
            }
            table.push(p.ln());
        }
        factors.push((scope, table));
    }
    if let Some(&(line, tok)) = toks.items.get(toks.pos) {
        return Err(ParseError::Malformed {
            line,
            msg: format!("trailing token {tok:?}"),
        });
    }
    GraphicalModel::new(domains, factors).map_err(|e| ParseError::Malformed {
        line: 0,
        msg: e.to_string(),
    })
}

/// Writes the model as a `MARKOV` UAI document with probabilities
/// (`exp` of the stored logs) in shortest round-trip notation.
pub fn write_uai(model: &GraphicalModel) -> String {
    let mut out = String::new();
    out.push_str("MARKOV\n");
    let _ = writeln!(out, "{}", model.var_count());
    let doms: Vec<String> = model.domains.iter().map(|k| k.to_string()).collect();
    let _ = writeln!(out, "{}", doms.join(" "));
    let _ = writeln!(out, "{}", model.factors.len());
    for f in &model.factors {
        let _ = write!(out, "{}", f.arity());
        for v in f.scope() {
            let _ = write!(out, " {v}");
        }
        out.push('\n');
    }
    for f in &model.factors {
        out.push('\n');
        let _ = writeln!(out, "{}", f.table.len());
        let vals: Vec<String> = f.table.iter().map(|l| format!("{:?}", l.exp())).collect();
        let _ = writeln!(out, " {}", vals.join(" "));
    }
    out
}
