//! 13-column CSV streams (timestamp plus twelve phasor channels).
//!
//! Column names and angle units come from a [`CsvSchema`], normally loaded
//! from a sidecar file next to the data.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{RawFrame, DEFAULT_SAMPLE_RATE};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CsvSchema {
    pub timestamp: String,
    pub v_mag: [String; 3],
    pub v_ang: [String; 3],
    pub i_mag: [String; 3],
    pub i_ang: [String; 3],
    /// Angle columns are in degrees rather than radians.
    pub degrees: bool,
    /// Fraction of malformed rows tolerated before aborting.
    pub max_malformed_fraction: f64,
    pub sample_rate: f64,
}

impl Default for CsvSchema {
    fn default() -> Self {
        let cols =
            |prefix: &str, suffix: &str| ["a", "b", "c"].map(|p| format!("{prefix}{p}_{suffix}"));
        Self {
            timestamp: "timestamp_us".into(),
            v_mag: cols("v", "mag"),
            v_ang: cols("v", "ang"),
            i_mag: cols("i", "mag"),
            i_ang: cols("i", "ang"),
            degrees: false,
            max_malformed_fraction: 0.01,
            sample_rate: DEFAULT_SAMPLE_RATE,
        }
    }
}

impl CsvSchema {
    /// Reads a TOML sidecar; missing keys take defaults.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Schema(format!("{}: {e}", path.display())))
    }

    fn columns(&self) -> Vec<&str> {
        std::iter::once(self.timestamp.as_str())
            .chain(self.v_mag.iter().map(String::as_str))
            .chain(self.v_ang.iter().map(String::as_str))
            .chain(self.i_mag.iter().map(String::as_str))
            .chain(self.i_ang.iter().map(String::as_str))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParsedStream {
    pub frames: Vec<RawFrame>,
    pub rows: usize,
    pub skipped: usize,
}

pub fn parse_csv(path: &Path, schema: &CsvSchema) -> Result<ParsedStream> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_reader(file, schema)
}

pub fn parse_reader<R: std::io::Read>(reader: R, schema: &CsvSchema) -> Result<ParsedStream> {
    let mut rdr = ::csv::ReaderBuilder::new()
        .trim(::csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let index: HashMap<&str, usize> = headers.iter().enumerate().map(|(i, h)| (h, i)).collect();
    let cols = schema.columns();
    let missing: Vec<&str> = cols
        .iter()
        .copied()
        .filter(|c| !index.contains_key(c))
        .collect();
    if !missing.is_empty() {
        return Err(Error::Schema(format!(
            "missing columns: {}",
            missing.join(", ")
        )));
    }
    let idx: Vec<usize> = cols.iter().map(|c| index[c]).collect();
    let angle_scale = if schema.degrees {
        std::f64::consts::PI / 180.0
    } else {
        1.0
    };

    let mut out = ParsedStream::default();
    let mut last_ts = i64::MIN;
    for record in rdr.records() {
        out.rows += 1;
        let frame = record.ok().and_then(|rec| {
            let ts: i64 = rec.get(idx[0])?.parse().ok()?;
            let mut vals = [0.0f64; 12];
            for (k, v) in vals.iter_mut().enumerate() {
                *v = rec.get(idx[k + 1])?.parse().ok()?;
            }
            let three =
                |o: usize, scale: f64| [vals[o] * scale, vals[o + 1] * scale, vals[o + 2] * scale];
            let fr = RawFrame {
                timestamp: ts,
                v_mag: three(0, 1.0),
                v_ang: three(3, angle_scale),
                i_mag: three(6, 1.0),
                i_ang: three(9, angle_scale),
            };
            fr.check().ok()?;
            Some(fr)
        });
        match frame {
            Some(fr) if fr.timestamp > last_ts => {
                last_ts = fr.timestamp;
                out.frames.push(fr);
            }
            _ => out.skipped += 1,
        }
    }
    if out.rows > 0 && out.skipped as f64 / out.rows as f64 > schema.max_malformed_fraction {
        return Err(Error::TooManyMalformed {
            skipped: out.skipped,
            total: out.rows,
            tolerance: schema.max_malformed_fraction,
        });
    }
    if out.skipped > 0 {
        log::warn!("skipped {} of {} malformed rows", out.skipped, out.rows);
    }
    Ok(out)
}

/// Writes frames with the schema's column names. Angles are written in the
/// schema's unit.
pub fn write_csv(path: &Path, frames: &[RawFrame], schema: &CsvSchema) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = ::csv::Writer::from_writer(std::io::BufWriter::new(file));
    w.write_record(schema.columns())?;
    let scale = if schema.degrees {
        180.0 / std::f64::consts::PI
    } else {
        1.0
    };
    let mut row: Vec<String> = Vec::with_capacity(13);
    for fr in frames {
        row.clear();
        row.push(fr.timestamp.to_string());
        row.extend(fr.v_mag.iter().map(|v| format!("{v}")));
        row.extend(fr.v_ang.iter().map(|v| format!("{}", v * scale)));
        row.extend(fr.i_mag.iter().map(|v| format!("{v}")));
        row.extend(fr.i_ang.iter().map(|v| format!("{}", v * scale)));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "timestamp_us,va_mag,vb_mag,vc_mag,va_ang,vb_ang,vc_ang,ia_mag,ib_mag,ic_mag,ia_ang,ib_ang,ic_ang";

    fn row(ts: i64, i_mag: &str, ang: &str) -> String {
        format!("{ts},7200,7200,7200,{ang},0,0,{i_mag},40,40,0,0,0")
    }

    #[test]
    fn parses_well_formed_rows() {
        let text = format!(
            "{HEADER}\n{}\n{}\n{}\n",
            row(0, "40", "0"),
            row(1, "41", "0"),
            row(2, "42", "0")
        );
        let p = parse_reader(text.as_bytes(), &CsvSchema::default()).unwrap();
        assert_eq!(p.frames.len(), 3);
        assert_eq!(p.frames[2].i_mag[0], 42.0);
    }

    #[test]
    fn nan_row_is_skipped_and_counted() {
        let text = format!(
            "{HEADER}\n{}\n{}\n{}\n",
            row(0, "40", "0"),
            row(1, "NaN", "0"),
            row(2, "42", "0")
        );
        let schema = CsvSchema {
            max_malformed_fraction: 0.5,
            ..CsvSchema::default()
        };
        let p = parse_reader(text.as_bytes(), &schema).unwrap();
        assert_eq!((p.frames.len(), p.skipped), (2, 1));
        let strict = CsvSchema {
            max_malformed_fraction: 0.1,
            ..CsvSchema::default()
        };
        assert!(matches!(
            parse_reader(text.as_bytes(), &strict),
            Err(Error::TooManyMalformed {
                skipped: 1,
                total: 3,
                ..
            })
        ));
    }

    #[test]
    fn degrees_are_converted() {
        let text = format!("{HEADER}\n{}\n", row(0, "40", "90"));
        let schema = CsvSchema {
            degrees: true,
            ..CsvSchema::default()
        };
        let p = parse_reader(text.as_bytes(), &schema).unwrap();
        assert!((p.frames[0].v_ang[0] - std::f64::consts::FRAC_PI_2).abs() < 1e-15);
    }

    #[test]
    fn missing_column_is_a_schema_error() {
        let text = "timestamp_us,va_mag\n0,1\n";
        match parse_reader(text.as_bytes(), &CsvSchema::default()) {
            Err(Error::Schema(msg)) => assert!(msg.contains("vb_mag")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn writer_and_reader_agree() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        let frames = vec![RawFrame {
            timestamp: 5,
            v_mag: [7200.5, 7199.0, 7201.25],
            v_ang: [0.1, -2.0, 2.1],
            i_mag: [40.0, 41.5, 39.0],
            i_ang: [-0.2, -2.3, 1.8],
        }];
        write_csv(&path, &frames, &CsvSchema::default()).unwrap();
        let back = parse_csv(&path, &CsvSchema::default()).unwrap();
        assert_eq!(back.frames, frames);
    }
}
