//! Canonical, platform-independent byte encoding of [`Data`].
//!
//! Every item is `tag (1 byte) | payload length (u64, big-endian) | payload`.
//!
//! | tag  | kind  | payload                                                  |
//! |------|-------|----------------------------------------------------------|
//! | 0x00 | unit  | empty                                                    |
//! | 0x01 | bool  | one byte, 0 or 1                                         |
//! | 0x02 | int   | i64 big-endian                                           |
//! | 0x03 | float | IEEE-754 binary64 bits, big-endian                       |
//! | 0x04 | str   | UTF-8 bytes                                              |
//! | 0x05 | list  | concatenated item encodings                              |
//! | 0x06 | map   | (str key, value) pairs, keys sorted bytewise             |
//! | 0x07 | fn    | definition source text, UTF-8                            |
//! | 0x08 | task  | id, kind, command or fname, args, inputs, outputs, sources |
//! | 0x09 | fingerprint | 32 raw digest bytes (fingerprint input only)       |

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;

use crate::digest::Digest;
use crate::syntax::parse_fn_def;
use crate::task::{TaskKind, TaskSpec};
use crate::value::Data;

const TAG_UNIT: u8 = 0x00;
const TAG_BOOL: u8 = 0x01;
const TAG_INT: u8 = 0x02;
const TAG_FLOAT: u8 = 0x03;
const TAG_STR: u8 = 0x04;
const TAG_LIST: u8 = 0x05;
const TAG_MAP: u8 = 0x06;
const TAG_FN: u8 = 0x07;
const TAG_TASK: u8 = 0x08;
const TAG_FINGERPRINT: u8 = 0x09;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DecodeError {
    #[error("truncated input at byte {0}")]
    Truncated(usize),
    #[error("unknown tag {tag:#04x} at byte {at}")]
    UnknownTag { tag: u8, at: usize },
    #[error("malformed {what} at byte {at}")]
    Malformed { what: &'static str, at: usize },
    #[error("map keys not in canonical order at byte {0}")]
    KeyOrder(usize),
    #[error("{0} trailing bytes")]
    Trailing(usize),
}

pub fn encode_data(data: &Data) -> Vec<u8> {
    let mut out = Vec::new();
    Encoder { task_hook: None }.item(data, &mut out);
    out
}

/// Encoding used inside function-task fingerprints: strings pass through
/// `canon`, and task arguments are replaced by their parent's fingerprint.
pub(crate) fn encode_for_fingerprint(
    data: &Data,
    canon: &dyn Fn(&str) -> String,
    parent_fp: &dyn Fn(&TaskSpec) -> Digest,
) -> Vec<u8> {
    let mut out = Vec::new();
    Encoder { task_hook: Some((canon, parent_fp)) }.item(data, &mut out);
    out
}

type Hooks<'a> = (&'a dyn Fn(&str) -> String, &'a dyn Fn(&TaskSpec) -> Digest);

struct Encoder<'a> {
    task_hook: Option<Hooks<'a>>,
}

fn frame(tag: u8, payload: &[u8], out: &mut Vec<u8>) {
    out.push(tag);
    out.extend_from_slice(&(payload.len() as u64).to_be_bytes());
    out.extend_from_slice(payload);
}

impl Encoder<'_> {
    fn str(&self, s: &str, out: &mut Vec<u8>) {
        match self.task_hook {
            Some((canon, _)) => frame(TAG_STR, canon(s).as_bytes(), out),
            None => frame(TAG_STR, s.as_bytes(), out),
        }
    }

    fn key(&self, s: &str) -> String {
        match self.task_hook {
            Some((canon, _)) => canon(s),
            None => String::from(s),
        }
    }

    fn item(&self, data: &Data, out: &mut Vec<u8>) {
        match data {
            Data::Unit => frame(TAG_UNIT, &[], out),
            Data::Bool(b) => frame(TAG_BOOL, &[*b as u8], out),
            Data::Int(v) => frame(TAG_INT, &v.to_be_bytes(), out),
            Data::Float(v) => frame(TAG_FLOAT, &v.to_bits().to_be_bytes(), out),
            Data::Str(s) => self.str(s, out),
            Data::List(items) => {
                let mut payload = Vec::new();
                for it in items {
                    self.item(it, &mut payload);
                }
                frame(TAG_LIST, &payload, out);
            }
            Data::Map(m) => {
                // Canonicalization may merge or reorder keys, so re-sort.
                let mut pairs: Vec<(String, Vec<u8>)> = m
                    .iter()
                    .map(|(k, v)| {
                        let mut vb = Vec::new();
                        self.item(v, &mut vb);
                        (self.key(k), vb)
                    })
                    .collect();
                pairs.sort();
                let mut payload = Vec::new();
                for (k, v) in pairs {
                    let k = {
                        let mut kb = Vec::new();
                        frame(TAG_STR, k.as_bytes(), &mut kb);
                        kb
                    };
                    payload.extend_from_slice(&k);
                    payload.extend_from_slice(&v);
                }
                frame(TAG_MAP, &payload, out);
            }
            Data::Fn(def) => frame(TAG_FN, def.source.as_bytes(), out),
            Data::Task(spec) => match self.task_hook {
                Some((_, parent_fp)) => frame(TAG_FINGERPRINT, &parent_fp(spec).0, out),
                None => frame(TAG_TASK, &self.task_payload(spec), out),
            },
        }
    }

    fn task_payload(&self, spec: &TaskSpec) -> Vec<u8> {
        let mut p = Vec::new();
        self.str(&spec.id, &mut p);
        match &spec.kind {
            TaskKind::Command { command } => {
                self.str("cmd", &mut p);
                self.str(command, &mut p);
                self.item(&Data::List(Vec::new()), &mut p);
            }
            TaskKind::Function { fname, args, .. } => {
                self.str("fn", &mut p);
                self.str(fname, &mut p);
                let mut payload = Vec::new();
                for a in args {
                    self.item(a, &mut payload);
                }
                frame(TAG_LIST, &payload, &mut p);
            }
        }
        let paths = |v: &[String]| Data::List(v.iter().cloned().map(Data::Str).collect());
        self.item(&paths(&spec.inputs), &mut p);
        self.item(&paths(&spec.outputs), &mut p);
        let sources = match &spec.kind {
            TaskKind::Function { sources, .. } => {
                sources.iter().map(|(k, v)| (k.clone(), Data::Str(v.clone()))).collect()
            }
            TaskKind::Command { .. } => BTreeMap::new(),
        };
        self.item(&Data::Map(sources), &mut p);
        p
    }
}

pub fn decode_data(bytes: &[u8]) -> Result<Data, DecodeError> {
    let mut d = Decoder { bytes, at: 0, end: bytes.len() };
    let v = d.item()?;
    if d.at != bytes.len() {
        return Err(DecodeError::Trailing(bytes.len() - d.at));
    }
    Ok(v)
}

/// Reads items from `bytes[at..end]`; offsets in errors are absolute.
struct Decoder<'a> {
    bytes: &'a [u8],
    at: usize,
    end: usize,
}

impl<'a> Decoder<'a> {
    fn header(&mut self) -> Result<(u8, usize, &'a [u8]), DecodeError> {
        let start = self.at;
        if self.end < start + 9 {
            return Err(DecodeError::Truncated(start));
        }
        let tag = self.bytes[start];
        let mut len = [0u8; 8];
        len.copy_from_slice(&self.bytes[start + 1..start + 9]);
        let len = u64::from_be_bytes(len);
        let body = start + 9;
        let end = usize::try_from(len)
            .ok()
            .and_then(|l| body.checked_add(l))
            .filter(|&e| e <= self.end)
            .ok_or(DecodeError::Truncated(start))?;
        self.at = end;
        Ok((tag, start, &self.bytes[body..end]))
    }

    /// Decoder over the payload just returned by `header`.
    fn sub(&self, payload: &'a [u8]) -> Decoder<'a> {
        Decoder { bytes: self.bytes, at: self.at - payload.len(), end: self.at }
    }

    fn string(&mut self) -> Result<String, DecodeError> {
        let (tag, at, payload) = self.header()?;
        if tag != TAG_STR {
            return Err(DecodeError::Malformed { what: "string", at });
        }
        String::from_utf8(payload.to_vec()).map_err(|_| DecodeError::Malformed { what: "utf-8", at })
    }

    fn items(&self, payload: &'a [u8]) -> Result<Vec<Data>, DecodeError> {
        let mut d = self.sub(payload);
        let mut items = Vec::new();
        while d.at < d.end {
            items.push(d.item()?);
        }
        Ok(items)
    }

    fn string_list(&mut self) -> Result<Vec<String>, DecodeError> {
        let at = self.at;
        match self.item()? {
            Data::List(items) => items
                .into_iter()
                .map(|d| match d {
                    Data::Str(s) => Ok(s),
                    _ => Err(DecodeError::Malformed { what: "path list", at }),
                })
                .collect(),
            _ => Err(DecodeError::Malformed { what: "path list", at }),
        }
    }

    fn item(&mut self) -> Result<Data, DecodeError> {
        let (tag, at, payload) = self.header()?;
        let fixed = |n: usize| {
            if payload.len() == n {
                Ok(())
            } else {
                Err(DecodeError::Malformed { what: "fixed-width scalar", at })
            }
        };
        Ok(match tag {
            TAG_UNIT => {
                fixed(0)?;
                Data::Unit
            }
            TAG_BOOL => {
                fixed(1)?;
                match payload[0] {
                    0 => Data::Bool(false),
                    1 => Data::Bool(true),
                    _ => return Err(DecodeError::Malformed { what: "bool", at }),
                }
            }
            TAG_INT => {
                fixed(8)?;
                let mut b = [0u8; 8];
                b.copy_from_slice(payload);
                Data::Int(i64::from_be_bytes(b))
            }
            TAG_FLOAT => {
                fixed(8)?;
                let mut b = [0u8; 8];
                b.copy_from_slice(payload);
                Data::Float(f64::from_bits(u64::from_be_bytes(b)))
            }
            TAG_STR => Data::Str(
                String::from_utf8(payload.to_vec())
                    .map_err(|_| DecodeError::Malformed { what: "utf-8", at })?,
            ),
            TAG_LIST => Data::List(self.items(payload)?),
            TAG_MAP => {
                let mut d = self.sub(payload);
                let mut m = BTreeMap::new();
                let mut last: Option<String> = None;
                while d.at < d.end {
                    let k = d.string()?;
                    if last.as_ref().is_some_and(|l| l.as_bytes() >= k.as_bytes()) {
                        return Err(DecodeError::KeyOrder(at));
                    }
                    let v = d.item()?;
                    last = Some(k.clone());
                    m.insert(k, v);
                }
                Data::Map(m)
            }
            TAG_FN => {
                let src = core::str::from_utf8(payload)
                    .map_err(|_| DecodeError::Malformed { what: "utf-8", at })?;
                Data::Fn(parse_fn_def(src).map_err(|_| DecodeError::Malformed { what: "function source", at })?)
            }
            TAG_TASK => Data::Task(Arc::new(self.task(payload, at)?)),
            TAG_FINGERPRINT => return Err(DecodeError::Malformed { what: "fingerprint-only item", at }),
            tag => return Err(DecodeError::UnknownTag { tag, at }),
        })
    }

    fn task(&self, payload: &'a [u8], at: usize) -> Result<TaskSpec, DecodeError> {
        let mut d = self.sub(payload);
        let id = d.string()?;
        let kind = d.string()?;
        let head = d.string()?;
        let args = match d.item()? {
            Data::List(a) => a,
            _ => return Err(DecodeError::Malformed { what: "task args", at }),
        };
        let inputs = d.string_list()?;
        let outputs = d.string_list()?;
        let sources = match d.item()? {
            Data::Map(m) => m
                .into_iter()
                .map(|(k, v)| match v {
                    Data::Str(s) => Ok((k, s)),
                    _ => Err(DecodeError::Malformed { what: "task sources", at }),
                })
                .collect::<Result<BTreeMap<_, _>, _>>()?,
            _ => return Err(DecodeError::Malformed { what: "task sources", at }),
        };
        if d.at != d.end {
            return Err(DecodeError::Malformed { what: "task", at });
        }
        let kind = match kind.as_str() {
            "cmd" if args.is_empty() && sources.is_empty() => TaskKind::Command { command: head },
            "fn" => TaskKind::Function { fname: head, args, sources },
            _ => return Err(DecodeError::Malformed { what: "task kind", at }),
        };
        Ok(TaskSpec { id, kind, inputs, outputs })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    #[test]
    fn integer_five_layout() {
        assert_eq!(encode_data(&Data::Int(5)), vec![0x02, 0, 0, 0, 0, 0, 0, 0, 8, 0, 0, 0, 0, 0, 0, 0, 5]);
    }

    #[test]
    fn map_insertion_order_is_irrelevant() {
        // Every permutation of a 3-key map encodes identically.
        let keys = ["b", "a", "c"];
        let perms = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
        let encodings: Vec<Vec<u8>> = perms
            .iter()
            .map(|p| {
                let mut m = BTreeMap::new();
                for &i in p {
                    m.insert(String::from(keys[i]), Data::Int(i as i64));
                }
                encode_data(&Data::Map(m))
            })
            .collect();
        assert!(encodings.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn rejects_unsorted_map_and_trailing_bytes() {
        let mut bytes = encode_data(&Data::Int(1));
        bytes.push(0);
        assert_eq!(decode_data(&bytes), Err(DecodeError::Trailing(1)));

        let mut payload = Vec::new();
        frame(TAG_STR, b"b", &mut payload);
        frame(TAG_INT, &1i64.to_be_bytes(), &mut payload);
        frame(TAG_STR, b"a", &mut payload);
        frame(TAG_INT, &2i64.to_be_bytes(), &mut payload);
        let mut bad = Vec::new();
        frame(TAG_MAP, &payload, &mut bad);
        assert!(matches!(decode_data(&bad), Err(DecodeError::KeyOrder(_))));
    }

    #[test]
    fn truncated_input_is_an_error() {
        let bytes = encode_data(&Data::Str(String::from("hello")));
        for cut in 0..bytes.len() {
            assert!(decode_data(&bytes[..cut]).is_err());
        }
    }

    pub(crate) fn arb_data() -> impl Strategy<Value = Data> {
        let leaf = prop_oneof![
            Just(Data::Unit),
            any::<bool>().prop_map(Data::Bool),
            any::<i64>().prop_map(Data::Int),
            any::<f64>().prop_map(Data::Float),
            "[a-z\\-0-9 ]{0,12}".prop_map(Data::Str),
        ];
        leaf.prop_recursive(4, 48, 6, |inner| {
            prop_oneof![
                proptest::collection::vec(inner.clone(), 0..6).prop_map(Data::List),
                proptest::collection::btree_map("[a-z]{0,4}", inner, 0..6).prop_map(Data::Map),
            ]
        })
    }

    proptest! {
        #[test]
        fn decode_inverts_encode(d in arb_data()) {
            prop_assert_eq!(decode_data(&encode_data(&d)).unwrap(), d);
        }

        #[test]
        fn equal_bytes_iff_equal_data(a in arb_data(), b in arb_data()) {
            prop_assert_eq!(encode_data(&a) == encode_data(&b), a == b);
        }
    }
}
