//! Newline-delimited JSON input and output streams.
//!
//! Measurements: `{"sensor": "...", "value": <number>, "ts": <ms>}`.
//! Results: `{"group": "...", "sum": <number>, "count": <n>, "ts": <ms>}`.

use std::io::{BufRead, Write};

use thiserror::Error;

use super::types::{AggregationResult, Measurement};

#[derive(Debug, Error)]
pub enum StreamIoError {
    #[error("line {line}: {cause}")]
    Parse {
        line: usize,
        cause: serde_json::Error,
    },
    #[error("line {line}: negative timestamp")]
    NegativeTimestamp { line: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Loads a measurement stream from the input file format.
pub fn load_measurements(reader: impl BufRead) -> Result<Vec<Measurement>, StreamIoError> {
    let mut measurements = Vec::new();
    for (index, line) in reader.lines().enumerate() {
        let line_no = index + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let m: Measurement =
            serde_json::from_str(&line).map_err(|cause| StreamIoError::Parse {
                line: line_no,
                cause,
            })?;
        if m.timestamp < 0 {
            return Err(StreamIoError::NegativeTimestamp { line: line_no });
        }
        measurements.push(m);
    }
    Ok(measurements)
}

/// Writes aggregation results in the output file format, one per line.
pub fn write_results<'a>(
    results: impl IntoIterator<Item = &'a AggregationResult>,
    mut writer: impl Write,
) -> Result<(), StreamIoError> {
    for result in results {
        serde_json::to_writer(&mut writer, result).map_err(|cause| StreamIoError::Parse {
            line: 0,
            cause,
        })?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn measurement_round_trip() {
        let input = "{\"sensor\":\"s1\",\"value\":5.5,\"ts\":100}\n\n{\"sensor\":\"s2\",\"value\":1.0,\"ts\":200}\n";
        let ms = load_measurements(input.as_bytes()).unwrap();
        assert_eq!(ms.len(), 2);
        assert_eq!(ms[0].sensor, "s1");
        assert_eq!(ms[1].timestamp, 200);
    }

    #[test]
    fn negative_timestamps_are_rejected() {
        let input = "{\"sensor\":\"s1\",\"value\":5.5,\"ts\":-1}\n";
        assert!(matches!(
            load_measurements(input.as_bytes()),
            Err(StreamIoError::NegativeTimestamp { line: 1 })
        ));
    }

    #[test]
    fn results_are_one_json_object_per_line() {
        let results = [AggregationResult {
            group: "g1".to_owned(),
            sum: 12.0,
            count: 2,
            timestamp: 7,
        }];
        let mut out = Vec::new();
        write_results(&results, &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text, "{\"group\":\"g1\",\"sum\":12.0,\"count\":2,\"ts\":7}\n");
    }
}
