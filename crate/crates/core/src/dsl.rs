//! Line-oriented text formats for systems and symmetry candidates.
//!
//! System files:
//!
//! ```text
//! system kramers
//! params k : positive
//! vars x y
//! noises w1
//! drift x = y
//! drift y = -k^2 * y
//! sigma y w1 = sqrt(2*k^2)
//! ```
//!
//! `time t` and `funcs f(x, t)` are optional; unlisted sigma entries are 0.
//!
//! Candidate files (`tau`, `xi x`, `beta`, `B[p][q]`, `phi x`, `inverse x`,
//! `R = [[..], ..]`, `alpha`) may declare extra `params` of their own.

use std::collections::BTreeMap;
use std::fmt::Write;

use thiserror::Error;

use crate::expr::{parse_expr_at, Expr, ParseError, Scope, Symbol, VarKind};
use crate::model::{
    identity, DiscreteMap, FuncDecl, ItoSystem, Matrix, ModelError, Param, ParamKind, VectorField, WSymmetry,
};

#[derive(Debug, Error)]
pub enum DslError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error(transparent)]
    Expr(#[from] ParseError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

impl DslError {
    pub fn line(&self) -> Option<usize> {
        match self {
            DslError::Syntax { line, .. } => Some(*line),
            DslError::Expr(e) => Some(e.line),
            DslError::Model(_) => None,
        }
    }
}

fn syntax(line: usize, message: impl Into<String>) -> DslError {
    DslError::Syntax { line, message: message.into() }
}

/// Non-empty, comment-stripped lines with 1-based numbers and the column
/// where the content starts.
fn lines(src: &str) -> impl Iterator<Item = (usize, &str)> {
    src.lines().enumerate().filter_map(|(i, raw)| {
        let content = raw.split('#').next().unwrap_or("");
        (!content.trim().is_empty()).then_some((i + 1, content))
    })
}

fn is_ident(s: &str) -> bool {
    let mut chars = s.chars();
    chars.next().is_some_and(|c| c.is_alphabetic() || c == '_') && chars.all(|c| c.is_alphanumeric() || c == '_')
}

/// Splits `line` at the first `=`, returning the left side and the right
/// side together with its 1-based starting column.
fn split_assign(line: &str, n: usize) -> Result<(&str, &str, usize), DslError> {
    let eq = line.find('=').ok_or_else(|| syntax(n, "expected '='"))?;
    let rhs = &line[eq + 1..];
    let lead = rhs.len() - rhs.trim_start().len();
    let col = line[..eq + 1 + lead].chars().count() + 1;
    Ok((line[..eq].trim(), rhs.trim_end(), col))
}

fn parse_params(rest: &str, n: usize, out: &mut Vec<Param>) -> Result<(), DslError> {
    let (names, kind) = match rest.split_once(':') {
        Some((names, kind)) => {
            let kind = match kind.trim() {
                "positive" => ParamKind::Positive,
                "nonzero" => ParamKind::Nonzero,
                "real" => ParamKind::Real,
                other => return Err(syntax(n, format!("unknown parameter constraint '{other}'"))),
            };
            (names, kind)
        }
        None => (rest, ParamKind::Real),
    };
    for name in names.split([' ', ',']).filter(|s| !s.is_empty()) {
        if !is_ident(name) {
            return Err(syntax(n, format!("bad parameter name '{name}'")));
        }
        out.push(Param { name: name.to_string(), kind });
    }
    Ok(())
}

fn parse_func_decls(rest: &str, n: usize) -> Result<Vec<FuncDecl>, DslError> {
    let mut out = Vec::new();
    let mut s = rest.trim();
    while !s.is_empty() {
        let open = s.find('(').ok_or_else(|| syntax(n, "expected '(' in function declaration"))?;
        let close = s.find(')').ok_or_else(|| syntax(n, "expected ')' in function declaration"))?;
        let name = s[..open].trim().trim_start_matches(',').trim();
        if !is_ident(name) || close < open {
            return Err(syntax(n, format!("bad function declaration '{}'", &s[..=close.max(open)])));
        }
        let args: Vec<String> =
            s[open + 1..close].split(',').map(|a| a.trim().to_string()).filter(|a| !a.is_empty()).collect();
        out.push(FuncDecl { name: name.to_string(), args });
        s = s[close + 1..].trim_start_matches([',', ' ']);
    }
    Ok(out)
}

/// Parses a system file.
pub fn parse_system(src: &str) -> Result<ItoSystem, DslError> {
    let mut name = None;
    let mut params = Vec::new();
    let mut vars: Vec<Symbol> = Vec::new();
    let mut noises: Vec<Symbol> = Vec::new();
    let mut time = Symbol::new("t");
    let mut funcs = Vec::new();
    let mut body = Vec::new();
    for (n, line) in lines(src) {
        let trimmed = line.trim();
        let (kw, rest) = trimmed.split_once(char::is_whitespace).unwrap_or((trimmed, ""));
        match kw {
            "system" => name = Some(rest.trim().to_string()),
            "params" => parse_params(rest, n, &mut params)?,
            "vars" | "noises" => {
                for v in rest.split_whitespace() {
                    if !is_ident(v) {
                        return Err(syntax(n, format!("bad name '{v}'")));
                    }
                    let list = if kw == "vars" { &mut vars } else { &mut noises };
                    list.push(Symbol::new(v));
                }
            }
            "time" => {
                let t = rest.trim();
                if !is_ident(t) {
                    return Err(syntax(n, format!("bad time variable '{t}'")));
                }
                time = Symbol::new(t);
            }
            "funcs" => funcs.extend(parse_func_decls(rest, n)?),
            "drift" | "sigma" => body.push((n, line)),
            other => return Err(syntax(n, format!("unknown keyword '{other}'"))),
        }
    }
    let name = name.ok_or_else(|| syntax(1, "missing 'system' line"))?;
    if vars.is_empty() {
        return Err(syntax(1, "no 'vars' declared"));
    }
    let mut sys = ItoSystem {
        name,
        time,
        vars,
        noises,
        params,
        funcs,
        drift: Vec::new(),
        sigma: Vec::new(),
    };
    let scope = sys.scope();
    let n_vars = sys.n();
    let mut drift: Vec<Option<Expr>> = vec![None; n_vars];
    let mut sigma: Matrix = vec![vec![Expr::zero(); sys.m()]; n_vars];
    for (n, line) in body {
        let (lhs, rhs, col) = split_assign(line, n)?;
        let words: Vec<&str> = lhs.split_whitespace().collect();
        let var_index = |v: &str| {
            sys.vars.iter().position(|x| x.name() == v).ok_or_else(|| syntax(n, format!("undeclared variable '{v}'")))
        };
        let value = parse_expr_at(rhs, &scope, n, col)?;
        for w in &sys.noises {
            if value.depends_on(w) {
                return Err(syntax(n, format!("coefficient depends on the noise '{w}'")));
            }
        }
        match words.as_slice() {
            ["drift", v] => {
                let i = var_index(v)?;
                if drift[i].is_some() {
                    return Err(syntax(n, format!("drift for '{v}' given twice")));
                }
                drift[i] = Some(value);
            }
            ["sigma", v, w] => {
                let i = var_index(v)?;
                let k = sys
                    .noises
                    .iter()
                    .position(|x| x.name() == *w)
                    .ok_or_else(|| syntax(n, format!("undeclared noise '{w}'")))?;
                sigma[i][k] = value;
            }
            _ => return Err(syntax(n, format!("malformed left-hand side '{lhs}'"))),
        }
    }
    sys.drift = drift.into_iter().map(Option::unwrap_or_default).collect();
    sys.sigma = sigma;
    sys.validate()?;
    Ok(sys)
}

/// Renders a system in the file format accepted by [`parse_system`].
pub fn to_dsl(sys: &ItoSystem) -> String {
    let mut out = String::new();
    writeln!(out, "system {}", sys.name).unwrap();
    for p in &sys.params {
        match p.kind {
            ParamKind::Real => writeln!(out, "params {}", p.name),
            ParamKind::Positive => writeln!(out, "params {} : positive", p.name),
            ParamKind::Nonzero => writeln!(out, "params {} : nonzero", p.name),
        }
        .unwrap();
    }
    let names = |v: &[Symbol]| v.iter().map(Symbol::name).collect::<Vec<_>>().join(" ");
    writeln!(out, "vars {}", names(&sys.vars)).unwrap();
    if !sys.noises.is_empty() {
        writeln!(out, "noises {}", names(&sys.noises)).unwrap();
    }
    if sys.time.name() != "t" {
        writeln!(out, "time {}", sys.time).unwrap();
    }
    for f in &sys.funcs {
        writeln!(out, "funcs {}({})", f.name, f.args.join(", ")).unwrap();
    }
    for (v, f) in sys.vars.iter().zip(&sys.drift) {
        writeln!(out, "drift {v} = {f}").unwrap();
    }
    for (v, row) in sys.vars.iter().zip(&sys.sigma) {
        for (w, e) in sys.noises.iter().zip(row) {
            if !e.is_zero() {
                writeln!(out, "sigma {v} {w} = {e}").unwrap();
            }
        }
    }
    out
}

/// A symmetry candidate as read from a file; components not mentioned are
/// absent.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Candidate {
    pub name: Option<String>,
    pub params: Vec<Param>,
    pub tau: Option<Expr>,
    pub xi: BTreeMap<Symbol, Expr>,
    pub beta: Option<Expr>,
    pub alpha: Option<Expr>,
    /// Entries `B[p][q]` (1-based) as written.
    pub b: BTreeMap<(usize, usize), Expr>,
    pub phi: BTreeMap<Symbol, Expr>,
    pub inverse: BTreeMap<Symbol, Expr>,
    pub r: Option<Matrix>,
}

fn split_top(s: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut depth = 0i32;
    let mut start = 0;
    for (i, c) in s.char_indices() {
        match c {
            '(' | '[' => depth += 1,
            ')' | ']' => depth -= 1,
            ',' if depth == 0 => {
                out.push(&s[start..i]);
                start = i + 1;
            }
            _ => {}
        }
    }
    out.push(&s[start..]);
    out
}

fn parse_matrix(src: &str, scope: &Scope, n: usize, col: usize) -> Result<Matrix, DslError> {
    let s = src.trim();
    let inner = s
        .strip_prefix('[')
        .and_then(|x| x.strip_suffix(']'))
        .ok_or_else(|| syntax(n, "matrix must be written [[a, b], [c, d]]"))?;
    let offset = col + (src.len() - src.trim_start().len()) + 1;
    let mut rows = Vec::new();
    let mut pos = 0;
    for row in split_top(inner) {
        let row_col = offset + pos;
        pos += row.len() + 1;
        let lead = row.len() - row.trim_start().len();
        let body = row
            .trim()
            .strip_prefix('[')
            .and_then(|x| x.strip_suffix(']'))
            .ok_or_else(|| syntax(n, "matrix rows must be bracketed"))?;
        let mut entries = Vec::new();
        let mut epos = 0;
        for e in split_top(body) {
            entries.push(parse_expr_at(e, scope, n, row_col + lead + 1 + epos)?);
            epos += e.len() + 1;
        }
        rows.push(entries);
    }
    Ok(rows)
}

/// Parses a candidate file against the names of `sys`.
pub fn parse_candidate(src: &str, sys: &ItoSystem) -> Result<Candidate, DslError> {
    let mut cand = Candidate::default();
    let mut scope = sys.scope();
    for (n, line) in lines(src) {
        let trimmed = line.trim();
        if let Some(rest) = trimmed.strip_prefix("params ") {
            let before = cand.params.len();
            parse_params(rest, n, &mut cand.params)?;
            for p in &cand.params[before..] {
                scope.declare(&p.name, VarKind::Param);
            }
            continue;
        }
        if let Some(rest) = trimmed.strip_prefix("name ") {
            cand.name = Some(rest.trim().to_string());
            continue;
        }
        let (lhs, rhs, col) = split_assign(line, n)?;
        if lhs == "R" {
            cand.r = Some(parse_matrix(rhs, &scope, n, col)?);
            continue;
        }
        let value = parse_expr_at(rhs, &scope, n, col)?;
        let words: Vec<&str> = lhs.split_whitespace().collect();
        let var = |v: &str| {
            sys.vars
                .iter()
                .find(|x| x.name() == v)
                .cloned()
                .ok_or_else(|| syntax(n, format!("undeclared variable '{v}'")))
        };
        match words.as_slice() {
            ["tau"] => cand.tau = Some(value),
            ["beta"] => cand.beta = Some(value),
            ["alpha"] => cand.alpha = Some(value),
            ["xi", v] => {
                cand.xi.insert(var(v)?, value);
            }
            ["phi", v] => {
                cand.phi.insert(var(v)?, value);
            }
            ["inverse", v] => {
                cand.inverse.insert(var(v)?, value);
            }
            [b] if b.starts_with("B[") => {
                let idx: Vec<usize> = b[1..]
                    .split(['[', ']'])
                    .filter(|s| !s.is_empty())
                    .map(|s| s.trim().parse::<usize>())
                    .collect::<Result<_, _>>()
                    .map_err(|_| syntax(n, format!("bad index in '{b}'")))?;
                let &[p, q] = idx.as_slice() else {
                    return Err(syntax(n, format!("expected B[p][q], got '{b}'")));
                };
                if p == 0 || q == 0 || p > sys.m() || q > sys.m() {
                    return Err(syntax(n, format!("'{b}' out of range for {} noises", sys.m())));
                }
                cand.b.insert((p, q), value);
            }
            _ => return Err(syntax(n, format!("unknown candidate component '{lhs}'"))),
        }
    }
    Ok(cand)
}

impl Candidate {
    fn xi_vec(&self, sys: &ItoSystem) -> Vec<Expr> {
        sys.vars.iter().map(|v| self.xi.get(v).cloned().unwrap_or_default()).collect()
    }

    pub fn vector_field(&self, sys: &ItoSystem) -> Result<VectorField, ModelError> {
        let vf = VectorField {
            tau: self.tau.clone().unwrap_or_default(),
            xi: self.xi_vec(sys),
            beta: self.beta.clone(),
        };
        vf.check_projectable(&sys.vars)?;
        Ok(vf)
    }

    /// `B` filled antisymmetrically from the entries given; an entry and its
    /// transpose may both be given only if they are opposite.
    pub fn w_symmetry(&self, sys: &ItoSystem) -> Result<WSymmetry, ModelError> {
        let m = sys.m();
        let mut b = vec![vec![Expr::zero(); m]; m];
        for (&(p, q), e) in &self.b {
            let (p, q) = (p - 1, q - 1);
            b[p][q] = e.clone();
            if !self.b.contains_key(&(q + 1, p + 1)) {
                b[q][p] = -e;
            }
        }
        let tau = self.tau.clone().unwrap_or_default();
        if tau.depends_on_any(&sys.vars) {
            return Err(ModelError::Invalid("tau depends on the state variables".into()));
        }
        WSymmetry::new(tau, self.xi_vec(sys), b)
    }

    pub fn discrete_map(&self, sys: &ItoSystem) -> Result<DiscreteMap, ModelError> {
        if self.phi.is_empty() {
            return Err(ModelError::Invalid("candidate has no 'phi' components".into()));
        }
        let phi = sys.vars.iter().map(|v| self.phi.get(v).cloned().unwrap_or_else(|| Expr::sym(v))).collect();
        let r = self.r.clone().unwrap_or_else(|| identity(sys.m()));
        let mut map = DiscreteMap::new(phi, r)?;
        if !self.inverse.is_empty() {
            map = map.with_inverse(
                sys.vars.iter().map(|v| self.inverse.get(v).cloned().unwrap_or_else(|| Expr::sym(v))).collect(),
            );
        }
        Ok(map)
    }
}
