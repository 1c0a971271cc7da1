//! Line-oriented text format for interval MDPs.
//!
//! ```text
//! imdp <n_states> <label names...>
//! init <state>
//! sink <state>                  (optional)
//! label <state> <names...>      (states without labels are omitted)
//! t <state> <action> <successor> <lo> <hi>
//! ```
//!
//! Numbers use the shortest representation that parses back to the same
//! value. `#` starts a comment. Paths ending in `.gz` are gzip-compressed.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;

use super::{ImdpBuilder, IntervalMdp};
use crate::error::ImdpError;
use crate::model::LabelSet;
use crate::scalar::Scalar;

pub fn write_explicit<T: Scalar, W: Write>(m: &IntervalMdp<T>, mut w: W) -> std::io::Result<()> {
    write!(w, "imdp {}", m.n_states())?;
    for l in m.alphabet() {
        write!(w, " {l}")?;
    }
    writeln!(w)?;
    writeln!(w, "init {}", m.initial())?;
    if let Some(s) = m.sink() {
        writeln!(w, "sink {s}")?;
    }
    for (s, l) in m.labels().iter().enumerate() {
        if *l != LabelSet::EMPTY {
            write!(w, "label {s}")?;
            for i in l.indices() {
                write!(w, " {}", m.alphabet()[i])?;
            }
            writeln!(w)?;
        }
    }
    for s in 0..m.n_states() {
        for row in m.rows(s) {
            for (t, lo, hi) in row.entries() {
                writeln!(w, "t {s} {} {t} {lo} {hi}", row.action)?;
            }
        }
    }
    w.flush()
}

pub fn export_explicit<T: Scalar>(m: &IntervalMdp<T>, path: &Path) -> Result<(), ImdpError> {
    let file = BufWriter::new(File::create(path)?);
    if path.extension().is_some_and(|e| e == "gz") {
        let mut enc = GzEncoder::new(file, Compression::fast());
        write_explicit(m, &mut enc)?;
        enc.finish()?.flush()?;
    } else {
        write_explicit(m, file)?;
    }
    Ok(())
}

pub fn import_explicit<T: Scalar>(path: &Path) -> Result<IntervalMdp<T>, ImdpError> {
    let file = File::open(path)?;
    if path.extension().is_some_and(|e| e == "gz") {
        read_explicit(BufReader::new(GzDecoder::new(file)))
    } else {
        read_explicit(BufReader::new(file))
    }
}

// (1-based column, token)
fn tokens(line: &str) -> Vec<(usize, &str)> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, c) in line.char_indices() {
        match (c.is_whitespace(), start) {
            (true, Some(s)) => {
                out.push((s + 1, &line[s..i]));
                start = None;
            }
            (false, None) => start = Some(i),
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push((s + 1, &line[s..]));
    }
    out
}

struct Cursor<'a> {
    line: usize,
    end_column: usize,
    toks: std::vec::IntoIter<(usize, &'a str)>,
}

impl<'a> Cursor<'a> {
    fn err(&self, column: usize, message: impl Into<String>) -> ImdpError {
        ImdpError::Syntax {
            line: self.line,
            column,
            message: message.into(),
        }
    }

    fn next(&mut self, what: &str) -> Result<(usize, &'a str), ImdpError> {
        self.toks.next().ok_or_else(|| self.err(self.end_column, format!("expected {what}")))
    }

    fn parse<V: std::str::FromStr>(&mut self, what: &str) -> Result<(usize, V), ImdpError> {
        let (col, tok) = self.next(what)?;
        tok.parse()
            .map(|v| (col, v))
            .map_err(|_| self.err(col, format!("expected {what}, found `{tok}`")))
    }

    fn finish(&mut self) -> Result<(), ImdpError> {
        match self.toks.next() {
            Some((col, tok)) => Err(self.err(col, format!("unexpected `{tok}`"))),
            None => Ok(()),
        }
    }
}

type PendingRow<T> = (usize, u32, Vec<(u32, T, T)>);

pub fn read_explicit<T: Scalar, R: BufRead>(reader: R) -> Result<IntervalMdp<T>, ImdpError> {
    let mut header: Option<(usize, Vec<String>)> = None;
    let mut init = None;
    let mut sink = None;
    let mut labels: Vec<(usize, LabelSet)> = Vec::new();
    let mut rows: Vec<PendingRow<T>> = Vec::new();
    let mut sorted = true;

    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let content = line.split('#').next().unwrap_or("");
        let toks = tokens(content);
        if toks.is_empty() {
            continue;
        }
        let mut c = Cursor {
            line: i + 1,
            end_column: content.trim_end().len() + 1,
            toks: toks.into_iter(),
        };
        let (kw_col, kw) = c.next("keyword")?;
        if kw != "imdp" && header.is_none() {
            return Err(c.err(kw_col, "expected `imdp` header first"));
        }
        let n = header.as_ref().map_or(0, |h| h.0);
        let state = |c: &mut Cursor, what: &str| -> Result<usize, ImdpError> {
            let (col, s) = c.parse::<usize>(what)?;
            if s >= n {
                return Err(c.err(col, format!("{what} {s} out of range (n = {n})")));
            }
            Ok(s)
        };
        match kw {
            "imdp" => {
                if header.is_some() {
                    return Err(c.err(kw_col, "duplicate header"));
                }
                let (_, n) = c.parse::<usize>("state count")?;
                let alphabet: Vec<String> = c.toks.by_ref().map(|(_, t)| t.to_string()).collect();
                if alphabet.len() > 64 {
                    return Err(c.err(kw_col, "more than 64 labels"));
                }
                header = Some((n, alphabet));
            }
            "init" => {
                init = Some(state(&mut c, "state")?);
                c.finish()?;
            }
            "sink" => {
                sink = Some(state(&mut c, "state")?);
                c.finish()?;
            }
            "label" => {
                let s = state(&mut c, "state")?;
                let alphabet = &header.as_ref().expect("header checked").1;
                let mut set = LabelSet::EMPTY;
                for (col, name) in c.toks.by_ref() {
                    let ix = alphabet.iter().position(|l| l == name).ok_or(ImdpError::Syntax {
                        line: i + 1,
                        column: col,
                        message: format!("label `{name}` not declared in header"),
                    })?;
                    set.insert(ix);
                }
                labels.push((s, set));
            }
            "t" => {
                let s = state(&mut c, "state")?;
                let (_, a) = c.parse::<u32>("action")?;
                let t = state(&mut c, "successor")? as u32;
                let (lo_col, lo) = c.parse::<T>("lower bound")?;
                let (hi_col, hi) = c.parse::<T>("upper bound")?;
                c.finish()?;
                if !(lo >= T::zero() && lo <= T::one()) {
                    return Err(c.err(lo_col, format!("lower bound {lo} outside [0, 1]")));
                }
                if !(hi >= T::zero() && hi <= T::one()) {
                    return Err(c.err(hi_col, format!("upper bound {hi} outside [0, 1]")));
                }
                if hi < lo {
                    return Err(c.err(
                        hi_col,
                        format!("hi {hi} < lo {lo} in row (state {s}, action {a}), successor {t}"),
                    ));
                }
                match rows.last_mut() {
                    Some((ls, la, entries)) if *ls == s && *la == a => entries.push((t, lo, hi)),
                    last => {
                        if let Some((ls, la, _)) = last {
                            sorted &= (*ls, *la) < (s, a);
                        }
                        rows.push((s, a, vec![(t, lo, hi)]));
                    }
                }
            }
            other => return Err(c.err(kw_col, format!("unknown keyword `{other}`"))),
        }
    }

    let (n, alphabet) = header.ok_or(ImdpError::Syntax {
        line: 1,
        column: 1,
        message: "missing `imdp` header".into(),
    })?;
    if !sorted {
        rows.sort_by_key(|r| (r.0, r.1));
        let mut merged: Vec<PendingRow<T>> = Vec::with_capacity(rows.len());
        for r in rows {
            match merged.last_mut() {
                Some(last) if (last.0, last.1) == (r.0, r.1) => last.2.extend(r.2),
                _ => merged.push(r),
            }
        }
        rows = merged;
    }
    let mut b = ImdpBuilder::new(n, alphabet);
    b.set_initial(init.ok_or(ImdpError::Invalid("missing `init` line".into()))?);
    if let Some(s) = sink {
        b.set_sink(s);
    }
    for (s, l) in labels {
        b.set_label(s, l);
    }
    for (s, a, entries) in rows {
        b.push_row(s, a, entries)?;
    }
    b.build()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> IntervalMdp<f64> {
        let mut b = ImdpBuilder::new(3, vec!["goal".into(), "unsafe".into()]);
        b.set_label(1, LabelSet::single(0));
        b.set_label(2, LabelSet::single(1));
        b.set_sink(2);
        b.set_initial(0);
        b.push_row(0, 0, [(0, 0.1, 0.30000000000000004), (1, 0.2, 0.7), (2, 0.0, 0.1)]).unwrap();
        b.push_row(0, 3, [(1, 1.0 / 3.0, 1.0)]).unwrap();
        b.push_row(1, 0, [(1, 1.0, 1.0)]).unwrap();
        b.push_row(2, 0, [(2, 1.0, 1.0)]).unwrap();
        b.build().unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let m = sample();
        let mut buf = Vec::new();
        write_explicit(&m, &mut buf).unwrap();
        let back: IntervalMdp<f64> = read_explicit(buf.as_slice()).unwrap();
        assert_eq!(back, m);
        let mut again = Vec::new();
        write_explicit(&back, &mut again).unwrap();
        assert_eq!(buf, again);
    }

    #[test]
    fn gzip_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.imdp.gz");
        let m = sample();
        export_explicit(&m, &path).unwrap();
        assert_eq!(import_explicit::<f64>(&path).unwrap(), m);
    }

    #[test]
    fn unordered_rows_are_sorted() {
        let text = "imdp 2 goal\ninit 0\nlabel 1 goal\nt 1 0 1 1 1\nt 0 0 1 0.5 1\nt 0 0 0 0 0.5\n";
        let m: IntervalMdp<f64> = read_explicit(text.as_bytes()).unwrap();
        assert_eq!(m.row(0, 0).unwrap().succ, &[1, 0]);
    }

    #[test]
    fn hi_below_lo_names_row_and_position() {
        let text = "imdp 2 goal\ninit 0\n# comment\nt 0 0 1 0.6 0.5\n";
        match read_explicit::<f64, _>(text.as_bytes()) {
            Err(ImdpError::Syntax { line, column, message }) => {
                assert_eq!((line, column), (4, 13));
                assert!(message.contains("state 0, action 0"), "{message}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn syntax_errors() {
        for (text, line) in [
            ("init 0\n", 1),
            ("imdp 2\ninit 5\n", 2),
            ("imdp 2\ninit 0\nt 0 0 1 x 1\n", 3),
            ("imdp 2\ninit 0\nlabel 0 goal\n", 3),
            ("imdp 2\ninit 0\nfoo\n", 3),
            ("imdp 2\ninit 0\nt 0 0 1 0.5\n", 3),
        ] {
            match read_explicit::<f64, _>(text.as_bytes()) {
                Err(ImdpError::Syntax { line: l, .. }) => assert_eq!(l, line, "{text}"),
                other => panic!("{text}: {other:?}"),
            }
        }
    }

    #[test]
    fn infeasible_row_is_reported_on_import() {
        let text = "imdp 2\ninit 0\nt 0 0 0 0 0.2\nt 0 0 1 0 0.2\nt 1 0 1 1 1\n";
        assert!(matches!(
            read_explicit::<f64, _>(text.as_bytes()),
            Err(ImdpError::InfeasibleRow(_))
        ));
    }
}
