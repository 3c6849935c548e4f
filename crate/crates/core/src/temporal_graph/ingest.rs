use std::collections::HashMap;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use log::warn;

use super::{Event, EventStream, NodeId, RawNode};
use crate::error::{create_file, open_file, Error, Result};

/// Whether the fourth column carries a binary state label.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum LabelColumn {
    /// Present iff a header row names the fourth column `*label*`.
    #[default]
    Auto,
    Present,
    Absent,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IngestOptions {
    pub directed: bool,
    pub labels: LabelColumn,
    /// Source and destination ids live in separate id spaces (user/item files).
    pub bipartite: bool,
}

impl Default for IngestOptions {
    fn default() -> Self {
        IngestOptions {
            directed: true,
            labels: LabelColumn::Auto,
            bipartite: false,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Ingested {
    pub stream: EventStream,
    /// Rows whose timestamp was smaller than the previous row's.
    pub unsorted_rows: usize,
    pub had_header: bool,
    /// Amount subtracted from every timestamp.
    pub time_offset: f64,
}

pub fn ingest_csv(path: impl AsRef<Path>, opts: &IngestOptions) -> Result<Ingested> {
    let path = path.as_ref();
    let file = open_file(path)?;
    parse_csv(BufReader::new(file), path, opts)
}

struct Row {
    src: u64,
    dst: u64,
    t: f64,
    label: Option<bool>,
    feat_start: usize,
}

fn fields(line: &str) -> Vec<&str> {
    if line.contains(',') {
        line.split(',').map(str::trim).collect()
    } else {
        line.split_whitespace().collect()
    }
}

/// Parses `src,dst,timestamp[,label][,f1..fF]` rows (comma or whitespace
/// separated, optional header, `#`/`%` comment lines skipped).
pub fn parse_csv(reader: impl BufRead, name: &Path, opts: &IngestOptions) -> Result<Ingested> {
    let err = |line: usize, message: String| Error::Parse {
        path: PathBuf::from(name),
        line,
        message,
    };

    let mut rows: Vec<Row> = Vec::new();
    let mut feats: Vec<f64> = Vec::new();
    let mut width: Option<usize> = None;
    let mut has_label = opts.labels == LabelColumn::Present;
    let mut had_header = false;
    let mut first_data = true;

    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') || trimmed.starts_with('%') {
            continue;
        }
        let cols = fields(trimmed);
        if first_data {
            first_data = false;
            if cols[0].parse::<u64>().is_err() {
                had_header = true;
                if opts.labels == LabelColumn::Auto {
                    has_label = cols.get(3).is_some_and(|c| c.to_ascii_lowercase().contains("label"));
                }
                continue;
            }
        }
        if cols.len() < 3 {
            return Err(err(lineno, format!("expected at least 3 columns, found {}", cols.len())));
        }
        match width {
            None => width = Some(cols.len()),
            Some(w) if w != cols.len() => {
                return Err(err(lineno, format!("expected {w} columns, found {}", cols.len())))
            }
            _ => {}
        }
        let id = |s: &str, what: &str| {
            s.parse::<u64>()
                .map_err(|_| err(lineno, format!("{what} `{s}` is not a non-negative integer")))
        };
        let src = id(cols[0], "source id")?;
        let dst = id(cols[1], "destination id")?;
        let t: f64 = cols[2]
            .parse()
            .map_err(|_| err(lineno, format!("timestamp `{}` is not a number", cols[2])))?;
        if !t.is_finite() {
            return Err(err(lineno, format!("timestamp `{}` is not finite", cols[2])));
        }
        let mut next = 3;
        let label = if has_label {
            let raw = cols
                .get(3)
                .ok_or_else(|| err(lineno, "missing label column".to_string()))?;
            next = 4;
            match raw.parse::<f64>() {
                Ok(0.0) => Some(false),
                Ok(1.0) => Some(true),
                _ => return Err(err(lineno, format!("label `{raw}` is not 0 or 1"))),
            }
        } else {
            None
        };
        let feat_start = feats.len();
        for c in &cols[next..] {
            let v: f64 = c
                .parse()
                .map_err(|_| err(lineno, format!("feature `{c}` is not a number")))?;
            feats.push(v);
        }
        rows.push(Row {
            src,
            dst,
            t,
            label,
            feat_start,
        });
    }

    if rows.is_empty() {
        return Err(Error::NoEvents);
    }
    let feat_dim = width.unwrap_or(3) - if has_label { 4 } else { 3 };

    let unsorted_rows = rows.windows(2).filter(|w| w[1].t < w[0].t).count();
    if unsorted_rows > 0 {
        warn!(
            "{}: {unsorted_rows} rows out of chronological order; stream sorted",
            name.display()
        );
    }
    let mut order: Vec<usize> = (0..rows.len()).collect();
    // stable: equal timestamps keep file order
    order.sort_by(|&a, &b| rows[a].t.total_cmp(&rows[b].t));
    let time_offset = rows[order[0]].t;

    let mut index: HashMap<RawNode, NodeId> = HashMap::new();
    let mut raw_ids: Vec<RawNode> = Vec::new();
    let mut intern = |raw: RawNode| -> NodeId {
        *index.entry(raw).or_insert_with(|| {
            raw_ids.push(raw);
            (raw_ids.len() - 1) as NodeId
        })
    };

    let mut events = Vec::with_capacity(rows.len());
    let mut features = Vec::with_capacity(feats.len());
    for &i in &order {
        let r = &rows[i];
        let src = intern(RawNode { id: r.src, item: false });
        let dst = intern(RawNode {
            id: r.dst,
            item: opts.bipartite,
        });
        events.push(Event {
            src,
            dst,
            t: r.t - time_offset,
            label: r.label,
        });
        features.extend_from_slice(&feats[r.feat_start..r.feat_start + feat_dim]);
    }

    let stream = EventStream::with_raw_ids(events, features, feat_dim, opts.directed, raw_ids)?;
    Ok(Ingested {
        stream,
        unsorted_rows,
        had_header,
        time_offset,
    })
}

/// Writes the stream in the ingest format using raw node ids, so re-ingesting
/// reproduces events, dense ids and features exactly.
pub fn write_csv(stream: &EventStream, mut out: impl Write) -> Result<()> {
    let labels = stream.has_labels();
    write!(out, "src,dst,timestamp")?;
    if labels {
        write!(out, ",label")?;
    }
    for k in 0..stream.feat_dim() {
        write!(out, ",f{}", k + 1)?;
    }
    writeln!(out)?;
    for (i, ev) in stream.events().iter().enumerate() {
        write!(
            out,
            "{},{},{:?}",
            stream.raw_id(ev.src).id,
            stream.raw_id(ev.dst).id,
            ev.t
        )?;
        if labels {
            write!(out, ",{}", u8::from(ev.label == Some(true)))?;
        }
        for v in stream.feat(i) {
            write!(out, ",{v:?}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

pub fn write_csv_file(stream: &EventStream, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(create_file(path.as_ref())?);
    write_csv(stream, &mut w)?;
    w.flush()?;
    Ok(())
}
