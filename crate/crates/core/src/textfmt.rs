//! Line-based text formats. Floats are written with Rust's shortest
//! round-trip formatting, so write → read is bit exact. Blank lines and
//! lines starting with '#' are ignored on input.
//!
//! ```text
//! HPOLY n m terms        then per term:  re im α₁ … α_n
//! SYMT n m terms         then per term:  re im θ₁ … θ_n
//! MATRIX rows cols       then per row:   re im re im …
//! CONN n r               then "unitary: yes|no" and r rows per direction
//! FOURIERCONN n r terms  then per row:   q₁ … q_n j re im …  (r² pairs, row-major)
//! ```

use std::collections::BTreeMap;
use std::fmt::Write;

use num_complex::Complex64 as C64;

use crate::connalg::FiberConnForm;
use crate::error::{Error, Result};
use crate::linalg::CMat;
use crate::polyharm::{HPoly, MultiIndex};
use crate::symtensor::SymTensor;
use crate::torusmodel::FourierConnection;

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    last: usize,
}

impl<'a> Lines<'a> {
    fn new(s: &'a str) -> Self {
        Lines { inner: s.lines().enumerate(), last: 0 }
    }

    fn next_tokens(&mut self) -> Result<Vec<&'a str>> {
        for (i, line) in self.inner.by_ref() {
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            self.last = i + 1;
            return Ok(t.split_whitespace().collect());
        }
        Err(Error::Parse { line: self.last + 1, msg: "unexpected end of input".into() })
    }

    fn err(&self, msg: impl Into<String>) -> Error {
        Error::Parse { line: self.last, msg: msg.into() }
    }

    fn finish(&mut self) -> Result<()> {
        match self.next_tokens() {
            Ok(t) => Err(self.err(format!("trailing content {:?}", t.join(" ")))),
            Err(_) => Ok(()),
        }
    }

    fn header(&mut self, tag: &str, count: usize) -> Result<Vec<usize>> {
        let t = self.next_tokens()?;
        if t.first() != Some(&tag) || t.len() != count + 1 {
            return Err(self.err(format!("expected header '{tag}' with {count} fields")));
        }
        t[1..].iter().map(|x| self.parse::<usize>(x)).collect()
    }

    fn parse<T: std::str::FromStr>(&self, s: &str) -> Result<T> {
        s.parse().map_err(|_| self.err(format!("cannot parse {s:?}")))
    }
}

fn push_c(out: &mut String, z: C64) {
    // Debug keeps the sign of zero and switches to exponents at the extremes
    write!(out, "{:?} {:?}", z.re, z.im).unwrap();
}

fn write_terms<'a>(tag: &str, n: usize, m: usize, terms: Vec<(&'a MultiIndex, &'a C64)>) -> String {
    let mut out = format!("{tag} {n} {m} {}\n", terms.len());
    for (a, c) in terms {
        push_c(&mut out, *c);
        for e in &a.0 {
            write!(out, " {e}").unwrap();
        }
        out.push('\n');
    }
    out
}

fn read_terms(lines: &mut Lines<'_>, tag: &str) -> Result<(usize, usize, Vec<(MultiIndex, C64)>)> {
    let h = lines.header(tag, 3)?;
    let (n, m, count) = (h[0], h[1], h[2]);
    let mut terms = Vec::with_capacity(count);
    for _ in 0..count {
        let t = lines.next_tokens()?;
        if t.len() != n + 2 {
            return Err(lines.err(format!("expected {} fields", n + 2)));
        }
        let c = C64::new(lines.parse(t[0])?, lines.parse(t[1])?);
        let a: Vec<u32> = t[2..].iter().map(|x| lines.parse(x)).collect::<Result<_>>()?;
        terms.push((MultiIndex::new(a), c));
    }
    Ok((n, m, terms))
}

pub fn write_hpoly(p: &HPoly) -> String {
    write_terms("HPOLY", p.n(), p.degree(), p.terms().collect())
}

pub fn read_hpoly(s: &str) -> Result<HPoly> {
    let mut lines = Lines::new(s);
    let (n, m, terms) = read_terms(&mut lines, "HPOLY")?;
    lines.finish()?;
    HPoly::from_terms(n, m, terms)
}

pub fn write_symtensor(t: &SymTensor) -> String {
    write_terms("SYMT", t.n(), t.degree(), t.terms().collect())
}

pub fn read_symtensor(s: &str) -> Result<SymTensor> {
    let mut lines = Lines::new(s);
    let (n, m, terms) = read_terms(&mut lines, "SYMT")?;
    lines.finish()?;
    SymTensor::from_terms(n, m, terms)
}

fn write_rows(out: &mut String, m: &CMat) {
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if j > 0 {
                out.push(' ');
            }
            push_c(out, m[(i, j)]);
        }
        out.push('\n');
    }
}

fn read_rows(lines: &mut Lines<'_>, rows: usize, cols: usize) -> Result<CMat> {
    let mut m = CMat::zeros(rows, cols);
    for i in 0..rows {
        let t = lines.next_tokens()?;
        if t.len() != 2 * cols {
            return Err(lines.err(format!("expected {} numbers", 2 * cols)));
        }
        for j in 0..cols {
            m[(i, j)] = C64::new(lines.parse(t[2 * j])?, lines.parse(t[2 * j + 1])?);
        }
    }
    Ok(m)
}

pub fn write_matrix(m: &CMat) -> String {
    let mut out = format!("MATRIX {} {}\n", m.nrows(), m.ncols());
    write_rows(&mut out, m);
    out
}

pub fn read_matrix(s: &str) -> Result<CMat> {
    let mut lines = Lines::new(s);
    let h = lines.header("MATRIX", 2)?;
    let m = read_rows(&mut lines, h[0], h[1])?;
    lines.finish()?;
    Ok(m)
}

pub fn write_conn(g: &FiberConnForm) -> String {
    let mut out = format!("CONN {} {}\nunitary: {}\n", g.n(), g.r(), if g.is_unitary() { "yes" } else { "no" });
    for m in g.gammas() {
        write_rows(&mut out, m);
    }
    out
}

pub fn read_conn(s: &str) -> Result<FiberConnForm> {
    let mut lines = Lines::new(s);
    let h = lines.header("CONN", 2)?;
    let (n, r) = (h[0], h[1]);
    let t = lines.next_tokens()?;
    let unitary = match t.as_slice() {
        ["unitary:", "yes"] => true,
        ["unitary:", "no"] => false,
        _ => return Err(lines.err("expected 'unitary: yes' or 'unitary: no'")),
    };
    let gammas = (0..n).map(|_| read_rows(&mut lines, r, r)).collect::<Result<Vec<_>>>()?;
    lines.finish()?;
    FiberConnForm::new(gammas, unitary)
}

pub fn write_fourier(c: &FourierConnection) -> String {
    let (n, r) = (c.n(), c.r());
    let mut rows = Vec::new();
    for (q, f) in c.coeffs() {
        for (j, g) in f.gammas().iter().enumerate() {
            if g.iter().all(|z| *z == C64::new(0.0, 0.0)) {
                continue;
            }
            let mut line = String::new();
            for x in q {
                write!(line, "{x} ").unwrap();
            }
            write!(line, "{j}").unwrap();
            for a in 0..r {
                for b in 0..r {
                    line.push(' ');
                    push_c(&mut line, g[(a, b)]);
                }
            }
            rows.push(line);
        }
    }
    let mut out = format!("FOURIERCONN {n} {r} {}\n", rows.len());
    for l in rows {
        out.push_str(&l);
        out.push('\n');
    }
    out
}

pub fn read_fourier(s: &str) -> Result<FourierConnection> {
    let mut lines = Lines::new(s);
    let h = lines.header("FOURIERCONN", 3)?;
    let (n, r, count) = (h[0], h[1], h[2]);
    let mut acc: BTreeMap<Vec<i32>, Vec<Option<CMat>>> = BTreeMap::new();
    for _ in 0..count {
        let t = lines.next_tokens()?;
        if t.len() != n + 1 + 2 * r * r {
            return Err(lines.err(format!("expected {} fields", n + 1 + 2 * r * r)));
        }
        let q: Vec<i32> = t[..n].iter().map(|x| lines.parse(x)).collect::<Result<_>>()?;
        let j: usize = lines.parse(t[n])?;
        if j >= n {
            return Err(lines.err(format!("direction {j} out of range")));
        }
        let mut m = CMat::zeros(r, r);
        for a in 0..r {
            for b in 0..r {
                let k = n + 1 + 2 * (a * r + b);
                m[(a, b)] = C64::new(lines.parse(t[k])?, lines.parse(t[k + 1])?);
            }
        }
        let slot = &mut acc.entry(q).or_insert_with(|| vec![None; n])[j];
        *slot = Some(match slot.take() {
            Some(prev) => prev + m,
            None => m,
        });
    }
    lines.finish()?;
    let coeffs = acc
        .into_iter()
        .map(|(q, g)| {
            let g = g.into_iter().map(|m| m.unwrap_or_else(|| CMat::zeros(r, r))).collect();
            Ok((q, FiberConnForm::new(g, false)?))
        })
        .collect::<Result<BTreeMap<_, _>>>()?;
    FourierConnection::new(n, r, coeffs)
}
