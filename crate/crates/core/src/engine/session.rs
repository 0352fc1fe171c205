//! Per-message parsing session: memo tables, lazy cells and the
//! pattern-execution counter.

use std::collections::{BTreeMap, BTreeSet};

use super::eval::{eval, Val};
use super::index::{index_message, unfold, LineIndex};
use super::value::{LazyHandle, TypedValue};
use super::verdict::{Reason, ReasonCode, Verdict};
use super::{CompiledConstraint, CompiledGrammar, ConstraintKind};
use crate::abnf::Shape;
use crate::frontend::{EntryRef, FieldBinding};
use crate::matcher::{CaptureSpan, MatchOutcome, Pattern, DEFAULT_STEP_BUDGET};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MessageKind {
    Request,
    Response,
}

impl MessageKind {
    pub fn entry(self) -> &'static str {
        match self {
            MessageKind::Request => "requestLine",
            MessageKind::Response => "statusLine",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum HeaderState {
    ParsedOk,
    ParseFailed(Reason),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AccessError {
    #[error("no header or entry named `{0}`")]
    UnknownEntry(String),
    #[error("`{entry}` has no subfield `{name}`")]
    UnknownSubfield { entry: String, name: String },
    #[error("`{0}` is not a lazy subfield handle of this message")]
    BadHandle(String),
    #[error("{0}")]
    Failed(Reason),
}

/// One parsed line: the command line or a header instance.
#[derive(Debug, Clone)]
pub struct ParsedHeader {
    /// Header name, `requestLine` or `statusLine`.
    pub entry: String,
    pub instance: usize,
    pub line: usize,
    /// Unfolded value the pattern ran over.
    pub raw_value: Vec<u8>,
    pub state: HeaderState,
    captures: Vec<Option<CaptureSpan>>,
    forced: BTreeSet<String>,
    lazy_failures: BTreeMap<String, Reason>,
    values: BTreeMap<String, TypedValue>,
}

impl ParsedHeader {
    pub fn is_ok(&self) -> bool {
        self.state == HeaderState::ParsedOk
    }

    pub fn failure(&self) -> Option<&Reason> {
        match &self.state {
            HeaderState::ParseFailed(r) => Some(r),
            HeaderState::ParsedOk => None,
        }
    }

    /// Converted value of a subfield. Lazy subfields that were not forced
    /// yet, and anything inside them, come back as [`TypedValue::Lazy`].
    pub fn get_subfield(&self, name: &str) -> Result<&TypedValue, AccessError> {
        if let HeaderState::ParseFailed(r) = &self.state {
            return Err(AccessError::Failed(r.clone()));
        }
        self.values.get(name).ok_or_else(|| AccessError::UnknownSubfield {
            entry: self.entry.clone(),
            name: name.to_string(),
        })
    }

    /// Subfield values keyed by name, for every subfield of the entry.
    pub fn values(&self) -> &BTreeMap<String, TypedValue> {
        &self.values
    }

    fn text(&self, slot: usize) -> Option<&[u8]> {
        let span = self.captures.get(slot).copied().flatten()?;
        Some(&self.raw_value[span.start..span.end])
    }

    fn handle(&self, subfield: &str) -> LazyHandle {
        LazyHandle {
            entry: self.entry.clone(),
            instance: self.instance,
            subfield: subfield.to_string(),
        }
    }

    /// Whether `slot` sits below a lazy subfield that has not been forced.
    fn pending_lazy(&self, p: &Pattern, slot: usize) -> Option<String> {
        let mut cursor = Some(slot);
        let mut pending = None;
        while let Some(i) = cursor {
            let info = &p.slots[i];
            // A lazy field that did not occur leaves its contents, if any,
            // captured at header level.
            if info.lazy && !self.forced.contains(&info.name) && self.captures[i].is_some() {
                pending = Some(info.name.clone());
            }
            cursor = info.within_lazy.as_deref().and_then(|l| p.slot(l));
            if cursor == Some(i) {
                break;
            }
        }
        pending
    }

    fn value_of(&self, p: &Pattern, slot: usize) -> TypedValue {
        if let Some(lazy) = self.pending_lazy(p, slot) {
            return TypedValue::Lazy(self.handle(&lazy));
        }
        let Some(span) = self.captures[slot] else {
            return TypedValue::Absent;
        };
        let info = &p.slots[slot];
        let text = &self.raw_value[span.start..span.end];
        let children = || {
            p.slots
                .iter()
                .enumerate()
                .filter(|(_, s)| s.parent.as_deref() == Some(info.name.as_str()))
                .map(|(i, s)| (s.name.clone(), self.value_of(p, i)))
        };
        match info.shape {
            Shape::RawSlice => TypedValue::Raw(text.to_vec()),
            // Converted and range-checked when the span was captured.
            Shape::Uint16 => decimal(text).map_or(TypedValue::Absent, |v| TypedValue::U16(v as u16)),
            Shape::Uint32 => decimal(text).map_or(TypedValue::Absent, |v| TypedValue::U32(v as u32)),
            Shape::Enum => TypedValue::Enum {
                branch: span.branch.unwrap_or(0),
                text: text.to_vec(),
            },
            Shape::Struct => TypedValue::Struct(children().collect()),
            Shape::Union => TypedValue::Union {
                branch: span.branch.unwrap_or(0),
                fields: children().filter(|(_, v)| !v.is_absent()).collect(),
            },
        }
    }

    /// Runs the exact pattern of a lazy slot, and of the lazy slots around
    /// it first. `runs` counts pattern executions.
    fn force(&mut self, p: &Pattern, slot: usize, runs: &mut u64) -> Result<(), Reason> {
        let name = p.slots[slot].name.clone();
        if let Some(outer) = p.slots[slot].within_lazy.as_deref().and_then(|l| p.slot(l)) {
            if outer != slot {
                self.force(p, outer, runs)?;
            }
        }
        if let HeaderState::ParseFailed(r) = &self.state {
            return Err(r.clone());
        }
        if let Some(r) = self.lazy_failures.get(&name) {
            return Err(r.clone());
        }
        if self.forced.contains(&name) {
            return Ok(());
        }
        let Some(span) = self.captures[slot] else {
            // Nothing to parse for an optional field that did not occur.
            self.forced.insert(name);
            return Ok(());
        };
        let sub = &p.lazy[&name];
        *runs += 1;
        let subject = &self.raw_value[span.start..span.end];
        let result = match sub.run(subject, DEFAULT_STEP_BUDGET) {
            MatchOutcome::Matched(caps) => {
                let mut fresh = Vec::new();
                for (i, c) in caps.into_iter().enumerate() {
                    if let Some(c) = c {
                        self.captures[i] = Some(CaptureSpan {
                            start: c.start + span.start,
                            end: c.end + span.start,
                            branch: c.branch,
                        });
                        fresh.push(i);
                    }
                }
                self.check_slots(sub, fresh.into_iter())
            }
            MatchOutcome::NoMatch => Err(Reason::new(
                ReasonCode::Syntax,
                self.entry.clone(),
                format!("lazy subfield `{name}` = `{}` does not match", String::from_utf8_lossy(subject)),
            )),
            MatchOutcome::BudgetExceeded => Err(Reason::new(
                ReasonCode::Budget,
                self.entry.clone(),
                format!("lazy subfield `{name}` exceeded the step budget"),
            )),
        };
        match result {
            Ok(()) => {
                self.forced.insert(name);
                self.refresh(p);
                Ok(())
            }
            Err(r) => {
                self.lazy_failures.insert(name, r.clone());
                Err(r)
            }
        }
    }

    /// Byte range of a captured subfield within `raw_value`.
    pub fn span(&self, p: &Pattern, name: &str) -> Option<std::ops::Range<usize>> {
        let span = self.captures.get(p.slot(name)?).copied().flatten()?;
        Some(span.start..span.end)
    }

    fn refresh(&mut self, p: &Pattern) {
        self.values = p
            .slots
            .iter()
            .enumerate()
            .map(|(i, s)| (s.name.clone(), self.value_of(p, i)))
            .collect();
    }

    /// Numeric conversion and range checks over freshly captured slots.
    fn check_slots(&self, p: &Pattern, fresh: impl Iterator<Item = usize>) -> Result<(), Reason> {
        for slot in fresh {
            let info = &p.slots[slot];
            let bound = p.deferred_range_checks.get(&info.name);
            if !info.shape.is_numeric() && bound.is_none() {
                continue;
            }
            let Some(text) = self.text(slot) else { continue };
            let location = self.entry.clone();
            let Some(value) = decimal(text) else {
                let code = if text.iter().all(u8::is_ascii_digit) && !text.is_empty() {
                    ReasonCode::Range
                } else {
                    ReasonCode::Syntax
                };
                return Err(Reason::new(
                    code,
                    location,
                    format!("`{}` = `{}` is not a representable number", info.name, String::from_utf8_lossy(text)),
                ));
            };
            if info.shape.numeric_limit().is_some_and(|limit| value >= limit) {
                return Err(Reason::new(
                    ReasonCode::Range,
                    location,
                    format!("`{}` = {value} overflows {}", info.name, info.shape.keyword()),
                ));
            }
            if let Some(bound) = bound.filter(|b| !b.contains(value)) {
                return Err(Reason::new(
                    ReasonCode::Range,
                    location,
                    format!("`{}` = {value} outside {}", info.name, describe(bound)),
                ));
            }
        }
        Ok(())
    }
}

fn describe(b: &crate::frontend::RangeBound) -> String {
    match b.hi {
        Some(hi) => format!("[{}, {hi}{}", b.lo, if b.hi_strict { ")" } else { "]" }),
        None => format!("[{}, inf)", b.lo),
    }
}

fn decimal(text: &[u8]) -> Option<u64> {
    if text.is_empty() || !text.iter().all(u8::is_ascii_digit) {
        return None;
    }
    std::str::from_utf8(text).ok()?.parse().ok()
}

/// Runs an entry pattern over one value. `Err` when it does not match.
fn run_entry(
    p: &Pattern,
    entry: &str,
    instance: usize,
    line: usize,
    raw_value: Vec<u8>,
    counter: &mut u64,
) -> Result<ParsedHeader, Reason> {
    *counter += 1;
    let location = entry.to_string();
    let captures = match p.run(&raw_value, DEFAULT_STEP_BUDGET) {
        MatchOutcome::Matched(c) => c,
        MatchOutcome::NoMatch => {
            return Err(Reason::new(
                ReasonCode::Syntax,
                location,
                format!("`{}` does not match", String::from_utf8_lossy(&raw_value)),
            ))
        }
        MatchOutcome::BudgetExceeded => {
            return Err(Reason::new(ReasonCode::Budget, location, "pattern step budget exceeded"))
        }
    };
    let mut h = ParsedHeader {
        entry: entry.to_string(),
        instance,
        line,
        raw_value,
        state: HeaderState::ParsedOk,
        captures,
        forced: BTreeSet::new(),
        lazy_failures: BTreeMap::new(),
        values: BTreeMap::new(),
    };
    if let Err(reason) = h.check_slots(p, 0..p.slots.len()) {
        h.state = HeaderState::ParseFailed(reason);
    }
    h.refresh(p);
    Ok(h)
}

fn failed(entry: &str, instance: usize, line: usize, raw_value: Vec<u8>, reason: Reason) -> ParsedHeader {
    ParsedHeader {
        entry: entry.to_string(),
        instance,
        line,
        raw_value,
        state: HeaderState::ParseFailed(reason),
        captures: Vec::new(),
        forced: BTreeSet::new(),
        lazy_failures: BTreeMap::new(),
        values: BTreeMap::new(),
    }
}

/// Parses one unfolded value against an entry outside of any message, with
/// every lazy field forced. Block constraints are not evaluated.
pub fn parse_entry_value(g: &CompiledGrammar, entry: &str, value: &[u8]) -> Result<ParsedHeader, Reason> {
    let p = g
        .entry_pattern(entry)
        .ok_or_else(|| Reason::new(ReasonCode::Syntax, entry, "no such entry"))?;
    let mut h = run_entry(p, entry, 0, 0, value.to_vec(), &mut 0)?;
    if let Some(r) = h.failure() {
        return Err(r.clone());
    }
    let mut runs = 0;
    for slot in (0..p.slots.len()).filter(|s| p.slots[*s].lazy) {
        h.force(p, slot, &mut runs)?;
    }
    Ok(h)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Key {
    Command,
    Header(usize, usize),
}

/// A message under parse. Only the line scan runs up front; every pattern
/// runs on demand and at most once.
#[derive(Debug)]
pub struct ParsedMessage<'a> {
    g: &'a CompiledGrammar,
    raw: &'a [u8],
    index: LineIndex,
    /// Per declared header, the indices of its lines in `index.headers`.
    occurrences: Vec<Vec<usize>>,
    kind: Option<Result<MessageKind, Reason>>,
    parsed: BTreeMap<Key, ParsedHeader>,
    exec: u64,
    lazy_exec: u64,
}

impl<'a> ParsedMessage<'a> {
    pub fn open(g: &'a CompiledGrammar, raw: &'a [u8]) -> Result<Self, Reason> {
        let index = index_message(raw)?;
        let mut occurrences = vec![Vec::new(); g.headers.len()];
        for (i, line) in index.headers.iter().enumerate() {
            // Undeclared headers are skipped.
            if let Some(h) = g.header_by_key(&raw[line.key.clone()]) {
                occurrences[h].push(i);
            }
        }
        Ok(ParsedMessage {
            g,
            raw,
            index,
            occurrences,
            kind: None,
            parsed: BTreeMap::new(),
            exec: 0,
            lazy_exec: 0,
        })
    }

    pub fn index(&self) -> &LineIndex {
        &self.index
    }

    pub fn body(&self) -> &'a [u8] {
        &self.raw[self.index.body.clone()]
    }

    /// Header-level and lazy pattern executions so far.
    pub fn exec_counter(&self) -> u64 {
        self.exec
    }

    /// Lazy-subfield pattern executions so far.
    pub fn lazy_exec_counter(&self) -> u64 {
        self.lazy_exec
    }

    /// Number of instances of a declared header in the message.
    pub fn instances(&self, name: &str) -> Result<usize, AccessError> {
        let h = self.header_idx(name)?;
        Ok(self.occurrences[h].len())
    }

    fn header_idx(&self, name: &str) -> Result<usize, AccessError> {
        self.g
            .header_index(name)
            .ok_or_else(|| AccessError::UnknownEntry(name.to_string()))
    }

    /// Request or response, from the command line. Runs at most two
    /// patterns, once.
    pub fn message_type(&mut self) -> Result<MessageKind, Reason> {
        if let Some(kind) = &self.kind {
            return kind.clone();
        }
        let text = self.raw[self.index.command_line.clone()].to_vec();
        let candidates = [
            (MessageKind::Request, self.g.request_line.as_ref()),
            (MessageKind::Response, self.g.status_line.as_ref()),
        ];
        let mut result = Err(Reason::new(
            ReasonCode::Syntax,
            "line:1",
            "command line matches neither the request line nor the status line",
        ));
        for (kind, pattern) in candidates {
            let Some(p) = pattern else { continue };
            match run_entry(p, kind.entry(), 0, 1, text.clone(), &mut self.exec) {
                Ok(h) => {
                    self.parsed.insert(Key::Command, h);
                    result = Ok(kind);
                    break;
                }
                Err(r) if r.code == ReasonCode::Budget => {
                    result = Err(r);
                    break;
                }
                Err(_) => {}
            }
        }
        self.kind = Some(result.clone());
        result
    }

    /// The parsed command line, once the message type is known.
    pub fn command_line(&mut self) -> Result<&ParsedHeader, Reason> {
        self.message_type()?;
        Ok(&self.parsed[&Key::Command])
    }

    /// First instance of a header, parsed on first access. `None` when the
    /// message does not contain it. A repeated single-instance header
    /// fails with DUPLICATE_HEADER.
    pub fn parse_header(&mut self, name: &str) -> Result<Option<&ParsedHeader>, AccessError> {
        let h = self.header_idx(name)?;
        let count = self.occurrences[h].len();
        if count > 1 && !self.g.headers[h].multiple {
            let key = Key::Header(h, 0);
            if !self.parsed.contains_key(&key) {
                let line = &self.index.headers[self.occurrences[h][1]];
                let reason = Reason::new(
                    ReasonCode::DuplicateHeader,
                    format!("line:{}", line.line),
                    format!("`{}` appears {count} times", self.g.headers[h].name),
                );
                let first = self.index.headers[self.occurrences[h][0]].line;
                self.parsed
                    .insert(key, failed(&self.g.headers[h].name, 0, first, Vec::new(), reason));
            }
            return Ok(self.parsed.get(&key));
        }
        self.parse_instance(h, 0)
    }

    /// The `n`th instance (0-based, source order) of a header.
    pub fn parse_header_nth(&mut self, name: &str, n: usize) -> Result<Option<&ParsedHeader>, AccessError> {
        let h = self.header_idx(name)?;
        self.parse_instance(h, n)
    }

    fn parse_instance(&mut self, h: usize, n: usize) -> Result<Option<&ParsedHeader>, AccessError> {
        let Some(&line_idx) = self.occurrences[h].get(n) else {
            return Ok(None);
        };
        let key = Key::Header(h, n);
        if !self.parsed.contains_key(&key) {
            let decl = &self.g.headers[h];
            let line = &self.index.headers[line_idx];
            let value = unfold(self.raw, &line.segments);
            let parsed = run_entry(&decl.pattern, &decl.name, n, line.line, value.clone(), &mut self.exec)
                .unwrap_or_else(|r| failed(&decl.name, n, line.line, value, r));
            self.parsed.insert(key, parsed);
        }
        Ok(self.parsed.get(&key))
    }

    fn entry_key(&mut self, entry: &str) -> Result<Option<Key>, AccessError> {
        if entry == "requestLine" || entry == "statusLine" {
            let is_request = entry == "requestLine";
            let declared = if is_request { &self.g.request_line } else { &self.g.status_line };
            if declared.is_none() {
                return Err(AccessError::UnknownEntry(entry.to_string()));
            }
            return Ok(match self.message_type() {
                Ok(kind) if (kind == MessageKind::Request) == is_request => Some(Key::Command),
                _ => None,
            });
        }
        let h = self.header_idx(entry)?;
        Ok(self.parse_header(entry)?.map(|_| Key::Header(h, 0)))
    }

    fn pattern(&self, key: Key) -> &'a Pattern {
        let g = self.g;
        match key {
            Key::Command => match self.kind {
                Some(Ok(MessageKind::Request)) => g.request_line.as_ref(),
                _ => g.status_line.as_ref(),
            }
            .expect("command line parsed against a declared pattern"),
            Key::Header(h, _) => &g.headers[h].pattern,
        }
    }

    /// Subfield of the first instance of an entry. `Absent` when the entry
    /// is not in the message.
    pub fn get_subfield(&mut self, entry: &str, name: &str) -> Result<TypedValue, AccessError> {
        let Some(key) = self.entry_key(entry)? else {
            return self.known_subfield(entry, name).map(|_| TypedValue::Absent);
        };
        self.parsed[&key].get_subfield(name).cloned()
    }

    fn known_subfield(&self, entry: &str, name: &str) -> Result<usize, AccessError> {
        let p = self
            .g
            .entry_pattern(entry)
            .ok_or_else(|| AccessError::UnknownEntry(entry.to_string()))?;
        p.slot(name).ok_or_else(|| AccessError::UnknownSubfield {
            entry: entry.to_string(),
            name: name.to_string(),
        })
    }

    fn key_of(&self, handle: &LazyHandle) -> Option<Key> {
        match handle.entry.as_str() {
            "requestLine" | "statusLine" => (handle.instance == 0).then_some(Key::Command),
            name => self.g.header_index(name).map(|h| Key::Header(h, handle.instance)),
        }
    }

    /// Parses a lazy subfield with its own pattern, once.
    pub fn force_lazy(&mut self, handle: &LazyHandle) -> Result<TypedValue, AccessError> {
        let bad = || AccessError::BadHandle(format!("{}.{}", handle.entry, handle.subfield));
        let key = self.key_of(handle).ok_or_else(bad)?;
        if !self.parsed.contains_key(&key) {
            return Err(bad());
        }
        let p = self.pattern(key);
        let slot = p.slot(&handle.subfield).filter(|s| p.slots[*s].lazy).ok_or_else(bad)?;
        self.force_slot(key, p, slot)?;
        self.parsed[&key].get_subfield(&handle.subfield).cloned()
    }

    fn force_slot(&mut self, key: Key, p: &'a Pattern, slot: usize) -> Result<(), AccessError> {
        let h = self.parsed.get_mut(&key).expect("forced entries are parsed");
        let mut runs = 0;
        let result = h.force(p, slot, &mut runs);
        self.exec += runs;
        self.lazy_exec += runs;
        result.map_err(AccessError::Failed)
    }

    fn force_all(&mut self, key: Key) -> Vec<Reason> {
        let p = self.pattern(key);
        let mut reasons = Vec::new();
        for (slot, info) in p.slots.iter().enumerate().filter(|(_, s)| s.lazy) {
            if self.parsed[&key].lazy_failures.contains_key(&info.name) {
                continue;
            }
            if let Err(AccessError::Failed(r)) = self.force_slot(key, p, slot) {
                if !reasons.contains(&r) {
                    reasons.push(r);
                }
            }
        }
        reasons
    }

    /// Resolves `Entry.sub[.sub...]`, forcing lazy fields on the way. Every
    /// component after the entry must name a subfield nested in the one
    /// before it.
    pub fn select(&mut self, path: &str) -> Result<TypedValue, AccessError> {
        let mut parts = path.split('.');
        let entry = parts.next().unwrap_or_default();
        let subs: Vec<&str> = parts.collect();
        let Some(last) = subs.last().copied() else {
            return Err(AccessError::UnknownSubfield {
                entry: entry.to_string(),
                name: String::new(),
            });
        };
        let slots: Vec<usize> = subs
            .iter()
            .map(|s| self.known_subfield(entry, s))
            .collect::<Result<_, _>>()?;
        let p = self
            .g
            .entry_pattern(entry)
            .ok_or_else(|| AccessError::UnknownEntry(entry.to_string()))?;
        for pair in slots.windows(2) {
            if !is_ancestor(p, pair[0], pair[1]) {
                return Err(AccessError::UnknownSubfield {
                    entry: entry.to_string(),
                    name: subs.join("."),
                });
            }
        }
        let mut value = self.get_subfield(entry, last)?;
        // Forcing one lazy field can expose another nested inside it.
        while let TypedValue::Lazy(handle) = &value {
            self.force_lazy(&handle.clone())?;
            value = self.get_subfield(entry, last)?;
        }
        Ok(value)
    }

    fn operand(&mut self, binding: &FieldBinding) -> Option<Val> {
        let entry = binding.entry.to_string();
        let key = self.entry_key(&entry).ok()??;
        let p = self.pattern(key);
        let slot = p.slot(&binding.subfield)?;
        if self.parsed[&key].pending_lazy(p, slot).is_some() {
            let lazy = self.parsed[&key].pending_lazy(p, slot)?;
            self.force_slot(key, p, p.slot(&lazy)?).ok()?;
        }
        let h = &self.parsed[&key];
        if !h.is_ok() {
            return None;
        }
        match h.values.get(&binding.subfield)? {
            TypedValue::Absent => None,
            v => match v.as_u64() {
                Some(n) => Some(Val::Num(n)),
                None => Some(Val::Text {
                    bytes: h.text(slot)?.to_vec(),
                    caseless: p.slots[slot].caseless,
                }),
            },
        }
    }

    fn check_constraints(&mut self, list: &'a [CompiledConstraint], location: &str, reasons: &mut Vec<Reason>) {
        for c in list {
            if eval(&c.expr, &mut |b| self.operand(b)) == Some(false) {
                let code = match c.kind {
                    ConstraintKind::Range { .. } => ReasonCode::Range,
                    ConstraintKind::General => ReasonCode::Constraint,
                };
                reasons.push(Reason::new(code, location, format!("violated: {}", c.text)));
            }
        }
    }

    /// Full validation: command line, every declared header present, all
    /// lazy fields, mandatory headers and constraints. Collects every
    /// reason rather than stopping at the first.
    pub fn validate(&mut self) -> Verdict {
        let mut reasons = Vec::new();
        let kind = match self.message_type() {
            Ok(kind) => {
                let command = &self.parsed[&Key::Command];
                reasons.extend(command.failure().cloned());
                reasons.extend(self.force_all(Key::Command));
                Some(kind)
            }
            Err(r) => {
                reasons.push(r);
                None
            }
        };

        let g = self.g;
        for (h, decl) in g.headers.iter().enumerate() {
            let count = self.occurrences[h].len();
            if count > 1 && !decl.multiple {
                let line = self.index.headers[self.occurrences[h][1]].line;
                reasons.push(Reason::new(
                    ReasonCode::DuplicateHeader,
                    format!("line:{line}"),
                    format!("`{}` appears {count} times", decl.name),
                ));
            }
            for n in 0..count {
                let key = Key::Header(h, n);
                let _ = self.parse_instance(h, n);
                if let Some(r) = self.parsed[&key].failure() {
                    reasons.push(r.clone());
                    continue;
                }
                reasons.extend(self.force_all(key));
                if !decl.constraints.is_empty() {
                    let mut local = Vec::new();
                    for c in &decl.constraints {
                        let p = &decl.pattern;
                        let h = &self.parsed[&key];
                        let mut lookup = |b: &FieldBinding| {
                            if b.entry != EntryRef::Header(decl.name.clone()) {
                                return None;
                            }
                            let slot = p.slot(&b.subfield)?;
                            match h.values.get(&b.subfield)? {
                                TypedValue::Absent | TypedValue::Lazy(_) => None,
                                v => Some(match v.as_u64() {
                                    Some(n) => Val::Num(n),
                                    None => Val::Text {
                                        bytes: h.text(slot)?.to_vec(),
                                        caseless: p.slots[slot].caseless,
                                    },
                                }),
                            }
                        };
                        if eval(&c.expr, &mut lookup) == Some(false) {
                            local.push(Reason::new(
                                ReasonCode::Constraint,
                                decl.name.clone(),
                                format!("violated: {}", c.text),
                            ));
                        }
                    }
                    reasons.extend(local);
                }
            }
        }

        if let Some(kind) = kind {
            for (h, decl) in g.headers.iter().enumerate() {
                let required = match kind {
                    MessageKind::Request => decl.mandatory_in.in_request(),
                    MessageKind::Response => decl.mandatory_in.in_response(),
                };
                if required && self.occurrences[h].is_empty() {
                    reasons.push(Reason::new(
                        ReasonCode::MandatoryMissing,
                        decl.name.clone(),
                        format!("mandatory header `{}` is missing", decl.name),
                    ));
                }
            }
            let (list, location) = match kind {
                MessageKind::Request => (&g.request_constraints, "request"),
                MessageKind::Response => (&g.response_constraints, "response"),
            };
            self.check_constraints(list, location, &mut reasons);
        }
        Verdict::from_reasons(reasons)
    }
}

fn is_ancestor(p: &Pattern, ancestor: usize, slot: usize) -> bool {
    let target = &p.slots[ancestor].name;
    let mut cursor = p.slots[slot].parent.as_deref();
    while let Some(name) = cursor {
        if name == target {
            return true;
        }
        cursor = p.slot(name).and_then(|i| p.slots[i].parent.as_deref());
    }
    false
}
