//! Action-segment CSV parsing.
//!
//! Columns are located by header name: `video_id`, `start_frame` and
//! `stop_frame` are required, `verb` and `noun` optional. Extra columns are
//! ignored, so EPIC-style annotation files load directly.

use std::io::Read;

use crate::error::{Result, ServiceError};
use crate::model::{RowError, SegmentRecord};

struct Columns {
    video: usize,
    start: usize,
    stop: usize,
    verb: Option<usize>,
    noun: Option<usize>,
}

impl Columns {
    fn locate(header: &csv::StringRecord) -> Result<Self> {
        let find = |name: &str| header.iter().position(|h| h.trim() == name);
        let need = |name: &str| {
            find(name).ok_or_else(|| ServiceError::BadRequest(format!("CSV header lacks a {name:?} column")))
        };
        Ok(Self {
            video: need("video_id")?,
            start: need("start_frame")?,
            stop: need("stop_frame")?,
            verb: find("verb"),
            noun: find("noun"),
        })
    }
}

/// Parses every row. Malformed rows come back as line-numbered errors and
/// do not stop the remaining rows from loading.
pub fn parse_segments<R: Read>(input: R) -> Result<Vec<std::result::Result<SegmentRecord, RowError>>> {
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(input);
    let header = reader
        .headers()
        .map_err(|e| ServiceError::BadRequest(format!("unreadable CSV header: {e}")))?
        .clone();
    let cols = Columns::locate(&header)?;
    let mut rows = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                let line = e.position().map_or(i as u64 + 2, |p| p.line());
                rows.push(Err(RowError { line, message: e.to_string() }));
                continue;
            }
        };
        let line = row.position().map_or(i as u64 + 2, |p| p.line());
        rows.push(parse_row(&row, &cols).map_err(|message| RowError { line, message }));
    }
    Ok(rows)
}

fn parse_row(row: &csv::StringRecord, cols: &Columns) -> std::result::Result<SegmentRecord, String> {
    let field = |i: usize, name: &str| {
        row.get(i)
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .ok_or_else(|| format!("missing {name}"))
    };
    let frame = |i: usize, name: &str| -> std::result::Result<u64, String> {
        let text = field(i, name)?;
        text.parse().map_err(|_| format!("{name} {text:?} is not a frame number"))
    };
    let video = field(cols.video, "video_id")?;
    let (start, stop) = (frame(cols.start, "start_frame")?, frame(cols.stop, "stop_frame")?);
    if start >= stop {
        return Err(format!("start_frame {start} is not before stop_frame {stop}"));
    }
    let optional = |i: Option<usize>| {
        i.and_then(|i| row.get(i))
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(str::to_owned)
    };
    let mut seg = SegmentRecord::new(video, start, stop);
    seg.verb = optional(cols.verb);
    seg.noun = optional(cols.noun);
    Ok(seg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_rows_and_reports_bad_lines() {
        let csv = "video_id,start_frame,stop_frame,verb,noun\n\
                   P01_01,0,100,take,knife\n\
                   P01_01,300,200,cut,tomato\n\
                   P01_01,100,abc,,\n\
                   P01_02,5,9\n";
        let rows = parse_segments(csv.as_bytes()).unwrap();
        assert_eq!(rows.len(), 4);
        let first = rows[0].as_ref().unwrap();
        assert_eq!(first.segment_id, "P01_01_00000000_00000100");
        assert_eq!(first.noun.as_deref(), Some("knife"));
        assert_eq!(rows[1].as_ref().unwrap_err().line, 3);
        assert!(rows[1].as_ref().unwrap_err().message.contains("not before"));
        assert_eq!(rows[2].as_ref().unwrap_err().line, 4);
        assert!(rows[3].as_ref().unwrap().verb.is_none());
    }

    #[test]
    fn header_is_required() {
        assert!(parse_segments("P01,0,100\n".as_bytes()).is_err());
        let extra = "narration,stop_frame,video_id,start_frame\nhi,10,v,0\n";
        assert!(parse_segments(extra.as_bytes()).unwrap()[0].is_ok());
    }
}
