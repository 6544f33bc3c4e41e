//! The prepared dataset directory ("AARM-DATA v1").
//!
//! Layout:
//! - `interactions.jsonl`  input records, canonical JSON, original order
//! - `split.txt`           header, then one `train`/`test` label per record
//! - `users.txt`, `items.txt`  one id per line, line number = index
//! - `vocab.txt`           line 0 `<PAD>`, line k = aspect k
//! - `aspect_sets.txt`     padded sets (`user <idx> <a_1> .. <a_M>`)
//! - `raw_aspect_sets.txt` untruncated sets, variable length
//! - `validation.tsv`      held-out `<user>\t<item>` pairs
//! - `manifest.txt`        key=value preparation parameters

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::corpus::{
    binarize, build_aspect_sets, build_validation, split_train_test, AspectSets, AspectSource,
    AspectVocabulary, InteractionRecord, InteractionTable, Positives, Split, ValidationSet,
    PAD_TOKEN,
};
use crate::error::{AarmError, Result};
use crate::manifest::{KeyValues, VERSION};

pub const DATA_FORMAT: &str = "AARM-DATA v1";

#[derive(Debug, Clone, PartialEq)]
pub struct PrepareConfig {
    pub ratio: f64,
    pub quantile: f64,
    pub seed: u64,
    pub validation_users: usize,
    pub aspects_from: AspectSource,
}

impl Default for PrepareConfig {
    fn default() -> Self {
        PrepareConfig {
            ratio: 0.7,
            quantile: 0.75,
            seed: 0,
            validation_users: 1000,
            aspects_from: AspectSource::Train,
        }
    }
}

impl PrepareConfig {
    pub fn to_key_values(&self) -> KeyValues {
        let mut kv = KeyValues::new();
        kv.set("ratio", self.ratio)
            .set("quantile", self.quantile)
            .set("seed", self.seed)
            .set("validation_users", self.validation_users)
            .set("aspects_from", self.aspects_from.as_str());
        kv
    }

    pub fn from_key_values(kv: &KeyValues) -> Result<Self> {
        let d = PrepareConfig::default();
        Ok(PrepareConfig {
            ratio: kv.get("ratio").map_or(Ok(d.ratio), |_| kv.parse_value("ratio"))?,
            quantile: kv.get("quantile").map_or(Ok(d.quantile), |_| kv.parse_value("quantile"))?,
            seed: kv.get("seed").map_or(Ok(d.seed), |_| kv.parse_value("seed"))?,
            validation_users: kv
                .get("validation_users")
                .map_or(Ok(d.validation_users), |_| kv.parse_value("validation_users"))?,
            aspects_from: match kv.get("aspects_from") {
                None => d.aspects_from,
                Some(s) => AspectSource::parse(s)
                    .ok_or_else(|| AarmError::Schema(format!("bad aspects_from {s:?}")))?,
            },
        })
    }
}

/// Everything downstream stages need from a prepared dataset.
#[derive(Debug, Clone)]
pub struct DatasetBundle {
    pub config: PrepareConfig,
    pub table: InteractionTable,
    pub vocab: AspectVocabulary,
    pub positives: Positives,
    pub sets: AspectSets,
    pub validation: ValidationSet,
    test_items: Vec<Vec<usize>>,
}

impl DatasetBundle {
    /// Runs split → vocabulary → aspect sets → validation on an unsplit table.
    pub fn prepare(table: InteractionTable, config: PrepareConfig) -> Result<Self> {
        let table = split_train_test(table, config.ratio, config.seed)?;
        table.validate_split()?;
        let vocab = AspectVocabulary::build(&table, config.aspects_from)?;
        let sets = build_aspect_sets(&table, &vocab, config.quantile, config.aspects_from)?;
        let positives = binarize(&table);
        let validation = build_validation(&positives, config.validation_users, config.seed ^ 0x5eed);
        Ok(Self::assemble(config, table, vocab, sets, validation))
    }

    pub fn assemble(
        config: PrepareConfig,
        table: InteractionTable,
        vocab: AspectVocabulary,
        sets: AspectSets,
        validation: ValidationSet,
    ) -> Self {
        let positives = binarize(&table);
        let test_items = table.items_per_user(Split::Test);
        DatasetBundle {
            config,
            table,
            vocab,
            positives,
            sets,
            validation,
            test_items,
        }
    }

    pub fn num_users(&self) -> usize {
        self.table.num_users()
    }

    pub fn num_items(&self) -> usize {
        self.table.num_items()
    }

    /// Distinct test items of `user`, sorted ascending.
    pub fn test_items(&self, user: usize) -> &[usize] {
        &self.test_items[user]
    }

    /// Train positives with the validation pairs removed.
    pub fn training_pairs(&self) -> Vec<(usize, usize)> {
        self.positives
            .pairs()
            .filter(|&(u, v)| !self.validation.contains(u, v))
            .collect()
    }

    pub fn user_index(&self, id: &str) -> Result<usize> {
        self.table
            .users()
            .get(id)
            .ok_or_else(|| AarmError::UnknownUser(id.to_string()))
    }

    pub fn item_index(&self, id: &str) -> Result<usize> {
        self.table
            .items()
            .get(id)
            .ok_or_else(|| AarmError::UnknownItem(id.to_string()))
    }

    pub fn manifest(&self) -> KeyValues {
        let mut kv = KeyValues::new();
        kv.set("format", DATA_FORMAT)
            .set("version", VERSION)
            .set("num_users", self.num_users())
            .set("num_items", self.num_items())
            .set("num_records", self.table.num_records())
            .set("num_aspects", self.vocab.num_aspects())
            .set("num_positives", self.positives.len())
            .set("user_len", self.sets.user_len())
            .set("item_len", self.sets.item_len());
        let cfg = self.config.to_key_values();
        kv.set("config_hash", cfg.hash());
        for (k, v) in cfg.iter() {
            kv.set(format!("prepare.{k}"), v);
        }
        kv
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| AarmError::io(dir, e))?;
        let write = |name: &str, content: String| -> Result<()> {
            let path = dir.join(name);
            fs::write(&path, content).map_err(|e| AarmError::io(&path, e))
        };

        let mut records = String::new();
        for r in self.table.records() {
            records.push_str(&serde_json::to_string(r)?);
            records.push('\n');
        }
        write("interactions.jsonl", records)?;

        let mut split = format!("{DATA_FORMAT} split\n");
        for s in self.table.split_labels() {
            split.push_str(s.as_str());
            split.push('\n');
        }
        write("split.txt", split)?;

        write("users.txt", lines(self.table.users().ids()))?;
        write("items.txt", lines(self.table.items().ids()))?;
        write("vocab.txt", lines(self.vocab.entries()))?;

        let mut sets = format!(
            "{DATA_FORMAT} aspect-sets\nuser_len {}\nitem_len {}\n",
            self.sets.user_len(),
            self.sets.item_len()
        );
        let mut raw = format!("{DATA_FORMAT} raw-aspect-sets\n");
        for u in 0..self.sets.num_users() {
            push_set(&mut sets, "user", u, self.sets.user_set(u));
            push_set(&mut raw, "user", u, self.sets.raw_user_set(u));
        }
        for v in 0..self.sets.num_items() {
            push_set(&mut sets, "item", v, self.sets.item_set(v));
            push_set(&mut raw, "item", v, self.sets.raw_item_set(v));
        }
        write("aspect_sets.txt", sets)?;
        write("raw_aspect_sets.txt", raw)?;

        let mut val = format!("{DATA_FORMAT} validation\n");
        for &(u, v) in self.validation.entries() {
            let _ = writeln!(val, "{u}\t{v}");
        }
        write("validation.tsv", val)?;
        write("manifest.txt", self.manifest().render())?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let read = |name: &str| -> Result<String> {
            let path = dir.join(name);
            fs::read_to_string(&path).map_err(|e| AarmError::io(&path, e))
        };
        let manifest = KeyValues::parse(&read("manifest.txt")?)?;
        if manifest.get("format") != Some(DATA_FORMAT) {
            return Err(AarmError::Schema(format!(
                "{} is not an {DATA_FORMAT} bundle",
                dir.display()
            )));
        }
        let config = PrepareConfig::from_key_values(&manifest.section("prepare"))?;

        let mut records = Vec::new();
        for (i, line) in read("interactions.jsonl")?.lines().enumerate() {
            let r: InteractionRecord = serde_json::from_str(line).map_err(|e| AarmError::Parse {
                context: "interactions.jsonl".into(),
                line: i + 1,
                message: e.to_string(),
            })?;
            records.push(r);
        }
        let split_text = read("split.txt")?;
        let mut split_lines = split_text.lines();
        expect_header(split_lines.next(), "split", "split.txt")?;
        let split = split_lines
            .enumerate()
            .map(|(i, l)| {
                Split::parse(l).ok_or_else(|| AarmError::Parse {
                    context: "split.txt".into(),
                    line: i + 2,
                    message: format!("bad split label {l:?}"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let table = InteractionTable::from_records(records)?.with_split(split)?;
        check_ids(&read("users.txt")?, table.users().ids(), "users.txt")?;
        check_ids(&read("items.txt")?, table.items().ids(), "items.txt")?;

        let vocab_list: Vec<String> = read("vocab.txt")?.lines().map(str::to_string).collect();
        if vocab_list.first().map(String::as_str) != Some(PAD_TOKEN) {
            return Err(AarmError::Schema("vocab.txt must start with <PAD>".into()));
        }
        let vocab = AspectVocabulary::from_list(vocab_list);

        let sets = parse_sets(
            &read("aspect_sets.txt")?,
            &read("raw_aspect_sets.txt")?,
            table.num_users(),
            table.num_items(),
            vocab.size(),
        )?;

        let val_text = read("validation.tsv")?;
        let mut val_lines = val_text.lines();
        expect_header(val_lines.next(), "validation", "validation.tsv")?;
        let mut entries = Vec::new();
        for (i, l) in val_lines.enumerate() {
            let bad = || AarmError::Parse {
                context: "validation.tsv".into(),
                line: i + 2,
                message: format!("bad entry {l:?}"),
            };
            let (u, v) = l.split_once('\t').ok_or_else(bad)?;
            let u: usize = u.parse().map_err(|_| bad())?;
            let v: usize = v.parse().map_err(|_| bad())?;
            if u >= table.num_users() || v >= table.num_items() {
                return Err(bad());
            }
            entries.push((u, v));
        }
        Ok(Self::assemble(
            config,
            table,
            vocab,
            sets,
            ValidationSet::from_entries(entries),
        ))
    }
}

fn lines(items: &[String]) -> String {
    let mut s = String::new();
    for i in items {
        s.push_str(i);
        s.push('\n');
    }
    s
}

fn push_set(out: &mut String, label: &str, idx: usize, set: &[usize]) {
    let _ = write!(out, "{label} {idx}");
    for a in set {
        let _ = write!(out, " {a}");
    }
    out.push('\n');
}

fn expect_header(line: Option<&str>, kind: &str, file: &str) -> Result<()> {
    let expected = format!("{DATA_FORMAT} {kind}");
    match line {
        Some(l) if l == expected => Ok(()),
        other => Err(AarmError::Schema(format!(
            "{file}: expected header {expected:?}, found {other:?}"
        ))),
    }
}

fn check_ids(text: &str, expected: &[String], file: &str) -> Result<()> {
    let found: Vec<&str> = text.lines().collect();
    if found.len() != expected.len() || found.iter().zip(expected).any(|(a, b)| *a != b) {
        return Err(AarmError::Schema(format!(
            "{file} does not match interactions.jsonl"
        )));
    }
    Ok(())
}

fn parse_set_lines(
    text: &str,
    n_users: usize,
    n_items: usize,
    vocab_size: usize,
    file: &str,
    skip: usize,
) -> Result<(Vec<Vec<usize>>, Vec<Vec<usize>>)> {
    let mut users = vec![Vec::new(); n_users];
    let mut items = vec![Vec::new(); n_items];
    for (i, line) in text.lines().enumerate().skip(skip) {
        let bad = |m: &str| AarmError::Parse {
            context: file.to_string(),
            line: i + 1,
            message: m.to_string(),
        };
        let mut parts = line.split_ascii_whitespace();
        let label = parts.next().ok_or_else(|| bad("empty line"))?;
        let idx: usize = parts
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad("missing index"))?;
        let set = parts
            .map(|s| s.parse::<usize>().ok().filter(|&a| a < vocab_size))
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| bad("bad aspect index"))?;
        let target = match label {
            "user" if idx < n_users => &mut users[idx],
            "item" if idx < n_items => &mut items[idx],
            _ => return Err(bad("bad label or index")),
        };
        *target = set;
    }
    Ok((users, items))
}

fn parse_sets(
    text: &str,
    raw_text: &str,
    n_users: usize,
    n_items: usize,
    vocab_size: usize,
) -> Result<AspectSets> {
    let mut head = text.lines();
    expect_header(head.next(), "aspect-sets", "aspect_sets.txt")?;
    let mut read_len = |key: &str| -> Result<usize> {
        head.next()
            .and_then(|l| l.strip_prefix(key))
            .and_then(|l| l.trim().parse().ok())
            .ok_or_else(|| AarmError::Schema(format!("aspect_sets.txt: missing {key}")))
    };
    let user_len = read_len("user_len")?;
    let item_len = read_len("item_len")?;
    let (user_sets, item_sets) =
        parse_set_lines(text, n_users, n_items, vocab_size, "aspect_sets.txt", 3)?;
    expect_header(raw_text.lines().next(), "raw-aspect-sets", "raw_aspect_sets.txt")?;
    let (raw_users, raw_items) =
        parse_set_lines(raw_text, n_users, n_items, vocab_size, "raw_aspect_sets.txt", 1)?;
    AspectSets::from_parts(user_len, item_len, user_sets, item_sets, raw_users, raw_items)
}
