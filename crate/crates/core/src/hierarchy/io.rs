//! Newline-delimited JSON formats for hierarchies and membership events.
//!
//! Hierarchy files carry one object per child: `{"child": "...", "parents":
//! ["...", ...]}`. Membership event streams use the same schema plus an
//! integer `ts` field in milliseconds.

use std::io::{BufRead, Write};

use thiserror::Error;

use super::membership::{HierarchyError, MembershipEvent, MembershipSet, MembershipTable};

#[derive(Debug, Error)]
pub enum HierarchyIoError {
    #[error("line {line}: {cause}")]
    Parse {
        line: usize,
        cause: serde_json::Error,
    },
    #[error("line {line}: {cause}")]
    Invalid {
        line: usize,
        cause: HierarchyError,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Loads a hierarchy file into a validated membership table.
///
/// A child listed twice is a duplicate-identifier error; a table whose
/// child → parent graph has a cycle is rejected with the cycle's node ids.
pub fn load_membership_table(reader: impl BufRead) -> Result<MembershipTable, HierarchyIoError> {
    let mut table = MembershipTable::new();
    for (index, line) in reader.lines().enumerate() {
        let line_no = index + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let row: MembershipSet =
            serde_json::from_str(&line).map_err(|cause| HierarchyIoError::Parse {
                line: line_no,
                cause,
            })?;
        if table.contains_child(&row.child) {
            return Err(HierarchyIoError::Invalid {
                line: line_no,
                cause: HierarchyError::DuplicateIdentifier(row.child),
            });
        }
        let event = MembershipEvent {
            child: row.child,
            parents: row.parents,
            timestamp: 0,
        };
        table
            .apply_event(&event)
            .map_err(|cause| HierarchyIoError::Invalid {
                line: line_no,
                cause,
            })?;
    }
    Ok(table)
}

/// Loads a membership event stream (hierarchy schema plus `ts`).
pub fn load_membership_events(
    reader: impl BufRead,
) -> Result<Vec<MembershipEvent>, HierarchyIoError> {
    let mut events = Vec::new();
    for (index, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let event: MembershipEvent =
            serde_json::from_str(&line).map_err(|cause| HierarchyIoError::Parse {
                line: index + 1,
                cause,
            })?;
        events.push(event);
    }
    Ok(events)
}

/// Writes a membership table in the hierarchy file format, one child per
/// line in id order.
pub fn write_membership_table(
    table: &MembershipTable,
    mut writer: impl Write,
) -> Result<(), HierarchyIoError> {
    for (child, parents) in table.entries() {
        let row = MembershipSet {
            child: child.clone(),
            parents: parents.clone(),
        };
        serde_json::to_writer(&mut writer, &row).map_err(|cause| HierarchyIoError::Parse {
            line: 0,
            cause,
        })?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}
