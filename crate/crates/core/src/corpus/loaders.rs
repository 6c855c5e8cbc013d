use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{Corpus, Dialogue, Gender, LabelSet, Speaker, Split, Utterance};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorpusFormat {
    MeldCsv,
    IemocapJson,
    NativeJsonl,
}

impl FromStr for CorpusFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "meld_csv" | "meld" => Ok(CorpusFormat::MeldCsv),
            "iemocap_json" | "iemocap" => Ok(CorpusFormat::IemocapJson),
            "native_jsonl" | "native" | "jsonl" => Ok(CorpusFormat::NativeJsonl),
            other => Err(Error::InvalidArgument(format!(
                "unknown corpus format {other:?} (expected meld_csv, iemocap_json or native_jsonl)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct LoadOptions {
    /// Class inventory to map labels onto. When absent the format's own set is
    /// used; native files fall back to detection (see [`read_native`]).
    pub label_set: Option<LabelSet>,
}

/// Load a corpus from `path`.
///
/// For `meld_csv`, `path` may be a single CSV (split inferred from the file
/// name) or a directory holding `*train*.csv`, `*dev*.csv`/`*val*.csv` and
/// `*test*.csv`.
pub fn load_corpus(path: &Path, format: CorpusFormat, options: &LoadOptions) -> Result<Corpus> {
    let corpus = match format {
        CorpusFormat::MeldCsv => load_meld(path, options)?,
        CorpusFormat::IemocapJson => load_iemocap(path, options)?,
        CorpusFormat::NativeJsonl => read_native(path, options)?,
    };
    if corpus.dialogues.is_empty() {
        return Err(Error::Data(format!(
            "{}: no dialogues found",
            path.display()
        )));
    }
    corpus.validate()?;
    Ok(corpus)
}

/// One line of the native interchange format.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct NativeRecord {
    dialogue_id: String,
    index: usize,
    speaker: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    speaker_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    gender: Option<Gender>,
    text: String,
    label: String,
    split: Split,
}

/// Write a corpus as JSON lines, one utterance per line.
pub fn write_native(corpus: &Corpus, path: &Path) -> Result<()> {
    let file =
        File::create(path).map_err(|e| Error::io(format!("create {}", path.display()), e))?;
    let mut out = BufWriter::new(file);
    write_native_to(corpus, &mut out).and_then(|_| out.flush().map_err(|e| Error::io("flush", e)))
}

pub(crate) fn write_native_to(corpus: &Corpus, out: &mut impl Write) -> Result<()> {
    for d in &corpus.dialogues {
        for u in &d.utterances {
            let record = NativeRecord {
                dialogue_id: d.id.clone(),
                index: u.index,
                speaker: u.speaker.display_name.clone(),
                speaker_id: (u.speaker.id != u.speaker.display_name).then(|| u.speaker.id.clone()),
                gender: u.speaker.gender,
                text: u.text.clone(),
                label: u.label.class_name.clone(),
                split: d.split,
            };
            serde_json::to_writer(&mut *out, &record)?;
            out.write_all(b"\n")
                .map_err(|e| Error::io("write corpus", e))?;
        }
    }
    Ok(())
}

/// Read the native JSON-lines format.
///
/// Without an explicit label set the classes are detected: MELD when every
/// label is a MELD emotion, IEMOCAP when every label is an IEMOCAP emotion,
/// otherwise a custom set of the distinct labels in sorted order.
pub fn read_native(path: &Path, options: &LoadOptions) -> Result<Corpus> {
    let file = File::open(path).map_err(|e| Error::io(format!("open {}", path.display()), e))?;
    let mut records = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(format!("read {}", path.display()), e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: NativeRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            file: path.to_path_buf(),
            line: i as u64 + 1,
            message: e.to_string(),
        })?;
        records.push((i as u64 + 1, record));
    }

    let label_set = match &options.label_set {
        Some(set) => set.clone(),
        None => detect_label_set(records.iter().map(|(_, r)| r.label.as_str()))?,
    };

    let mut order: Vec<String> = Vec::new();
    let mut groups: HashMap<String, (Split, Vec<Utterance>)> = HashMap::new();
    for (line, r) in records {
        let label = label_set.label(&r.label).map_err(|e| Error::Parse {
            file: path.to_path_buf(),
            line,
            message: e.to_string(),
        })?;
        let speaker = Speaker {
            id: r.speaker_id.unwrap_or_else(|| r.speaker.clone()),
            display_name: r.speaker,
            gender: r.gender,
        };
        let entry = groups.entry(r.dialogue_id.clone()).or_insert_with(|| {
            order.push(r.dialogue_id.clone());
            (r.split, Vec::new())
        });
        if entry.0 != r.split {
            return Err(Error::Parse {
                file: path.to_path_buf(),
                line,
                message: format!(
                    "dialogue {} appears in both {} and {}",
                    r.dialogue_id, entry.0, r.split
                ),
            });
        }
        entry.1.push(Utterance {
            dialogue_id: r.dialogue_id,
            index: r.index,
            speaker,
            text: r.text,
            label,
        });
    }

    let mut dialogues = Vec::with_capacity(order.len());
    for id in order {
        let (split, mut utterances) = groups.remove(&id).expect("grouped above");
        utterances.sort_by_key(|u| u.index);
        let dialogue = Dialogue {
            id,
            split,
            utterances,
        };
        dialogue
            .validate()
            .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
        dialogues.push(dialogue);
    }
    Ok(Corpus {
        label_set,
        dialogues,
    })
}

fn detect_label_set<'a>(labels: impl Iterator<Item = &'a str> + Clone) -> Result<LabelSet> {
    for set in [LabelSet::meld(), LabelSet::iemocap()] {
        if labels.clone().all(|l| set.label(l).is_ok()) {
            return Ok(set);
        }
    }
    let mut distinct: Vec<String> = labels.map(str::to_string).collect();
    distinct.sort();
    distinct.dedup();
    LabelSet::custom("custom", distinct)
}

fn split_from_file_name(path: &Path) -> Split {
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().to_lowercase())
        .unwrap_or_default();
    if name.contains("test") {
        Split::Test
    } else if name.contains("dev") || name.contains("val") {
        Split::Val
    } else {
        Split::Train
    }
}

fn meld_files(path: &Path) -> Result<Vec<(PathBuf, Split)>> {
    if path.is_file() {
        return Ok(vec![(path.to_path_buf(), split_from_file_name(path))]);
    }
    let entries = std::fs::read_dir(path)
        .map_err(|e| Error::io(format!("read directory {}", path.display()), e))?;
    let mut files: Vec<(PathBuf, Split)> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .is_some_and(|ext| ext.eq_ignore_ascii_case("csv"))
        })
        .map(|p| {
            let split = split_from_file_name(&p);
            (p, split)
        })
        .collect();
    files.sort_by(|a, b| a.1.cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
    Ok(files)
}

fn load_meld(path: &Path, options: &LoadOptions) -> Result<Corpus> {
    let label_set = options.label_set.clone().unwrap_or_else(LabelSet::meld);
    let mut dialogues = Vec::new();
    for (file, split) in meld_files(path)? {
        dialogues.extend(load_meld_file(&file, split, &label_set)?);
    }
    Ok(Corpus {
        label_set,
        dialogues,
    })
}

fn column(headers: &csv::StringRecord, name: &str, file: &Path) -> Result<usize> {
    headers
        .iter()
        .position(|h| {
            h.trim()
                .trim_start_matches('\u{feff}')
                .eq_ignore_ascii_case(name)
        })
        .ok_or_else(|| Error::Parse {
            file: file.to_path_buf(),
            line: 1,
            message: format!("missing column {name:?}"),
        })
}

fn load_meld_file(file: &Path, split: Split, label_set: &LabelSet) -> Result<Vec<Dialogue>> {
    let parse_err = |line: u64, message: String| Error::Parse {
        file: file.to_path_buf(),
        line,
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .flexible(false)
        .from_path(file)
        .map_err(|e| parse_err(0, e.to_string()))?;
    let headers = match reader.headers() {
        Ok(h) => h.clone(),
        // An empty file has no header row; it simply contributes nothing.
        Err(_) => return Ok(Vec::new()),
    };
    if headers.is_empty() {
        return Ok(Vec::new());
    }
    let text_col = column(&headers, "Utterance", file)?;
    let speaker_col = column(&headers, "Speaker", file)?;
    let emotion_col = column(&headers, "Emotion", file)?;
    let dialogue_col = column(&headers, "Dialogue_ID", file)?;
    let utterance_col = column(&headers, "Utterance_ID", file)?;

    let mut order: Vec<u64> = Vec::new();
    let mut groups: HashMap<u64, Vec<(u64, Utterance)>> = HashMap::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            parse_err(line, e.to_string())
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let field = |col: usize| record.get(col).unwrap_or("").trim();
        let dialogue: u64 = field(dialogue_col)
            .parse()
            .map_err(|_| parse_err(line, format!("bad Dialogue_ID {:?}", field(dialogue_col))))?;
        let utt_id: u64 = field(utterance_col)
            .parse()
            .map_err(|_| parse_err(line, format!("bad Utterance_ID {:?}", field(utterance_col))))?;
        let label = label_set
            .label(field(emotion_col))
            .map_err(|e| parse_err(line, e.to_string()))?;
        let speaker = field(speaker_col);
        if speaker.is_empty() {
            return Err(parse_err(line, "empty speaker".into()));
        }
        let utterance = Utterance {
            dialogue_id: String::new(),
            index: 0,
            speaker: Speaker::named(speaker),
            text: record.get(text_col).unwrap_or("").to_string(),
            label,
        };
        groups
            .entry(dialogue)
            .or_insert_with(|| {
                order.push(dialogue);
                Vec::new()
            })
            .push((utt_id, utterance));
    }

    Ok(order
        .into_iter()
        .map(|dialogue| {
            let id = format!("{split}_{dialogue}");
            let mut rows = groups.remove(&dialogue).expect("grouped above");
            rows.sort_by_key(|(utt_id, _)| *utt_id);
            let utterances = rows
                .into_iter()
                .enumerate()
                .map(|(i, (_, mut u))| {
                    u.dialogue_id = id.clone();
                    u.index = i + 1;
                    u
                })
                .collect();
            Dialogue {
                id,
                split,
                utterances,
            }
        })
        .collect())
}

#[derive(Debug, Deserialize)]
struct IemocapUtterance {
    speaker: String,
    #[serde(default)]
    gender: Option<Gender>,
    text: String,
    label: String,
}

#[derive(Debug, Deserialize)]
struct IemocapDialogue {
    id: String,
    split: Split,
    utterances: Vec<IemocapUtterance>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum IemocapFile {
    Wrapped { dialogues: Vec<IemocapDialogue> },
    Bare(Vec<IemocapDialogue>),
}

/// IEMOCAP-style JSON: either `{"dialogues": [...]}` or a bare array of
/// `{"id", "split", "utterances": [{"speaker", "gender"?, "text", "label"}]}`.
/// Speakers keep their actor id as display name until
/// [`assign_iemocap_names`](super::assign_iemocap_names) runs.
fn load_iemocap(path: &Path, options: &LoadOptions) -> Result<Corpus> {
    let label_set = options.label_set.clone().unwrap_or_else(LabelSet::iemocap);
    let raw = std::fs::read_to_string(path)
        .map_err(|e| Error::io(format!("read {}", path.display()), e))?;
    if raw.trim().is_empty() {
        return Ok(Corpus {
            label_set,
            dialogues: Vec::new(),
        });
    }
    let parsed: IemocapFile = serde_json::from_str(&raw).map_err(|e| Error::Parse {
        file: path.to_path_buf(),
        line: e.line() as u64,
        message: e.to_string(),
    })?;
    let raw_dialogues = match parsed {
        IemocapFile::Wrapped { dialogues } | IemocapFile::Bare(dialogues) => dialogues,
    };
    let mut dialogues = Vec::with_capacity(raw_dialogues.len());
    for d in raw_dialogues {
        let mut utterances = Vec::with_capacity(d.utterances.len());
        for (i, u) in d.utterances.into_iter().enumerate() {
            let label = label_set.label(&u.label).map_err(|e| {
                Error::Data(format!(
                    "{}: dialogue {} utterance {}: {e}",
                    path.display(),
                    d.id,
                    i + 1
                ))
            })?;
            utterances.push(Utterance {
                dialogue_id: d.id.clone(),
                index: i + 1,
                speaker: Speaker {
                    id: u.speaker.clone(),
                    display_name: u.speaker,
                    gender: u.gender,
                },
                text: u.text,
                label,
            });
        }
        dialogues.push(Dialogue {
            id: d.id,
            split: d.split,
            utterances,
        });
    }
    Ok(Corpus {
        label_set,
        dialogues,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
        let p = dir.join(name);
        let mut f = File::create(&p).unwrap();
        f.write_all(body.as_bytes()).unwrap();
        p
    }

    #[test]
    fn native_two_dialogues_of_three() {
        let dir = tempfile::tempdir().unwrap();
        let mut body = String::new();
        for d in ["a", "b"] {
            for i in 1..=3 {
                body.push_str(&format!(
                    "{{\"dialogue_id\":\"{d}\",\"index\":{i},\"speaker\":\"Ann\",\"text\":\"hi {i}\",\"label\":\"joy\",\"split\":\"train\"}}\n"
                ));
            }
        }
        let p = write(dir.path(), "c.jsonl", &body);
        let corpus = load_corpus(&p, CorpusFormat::NativeJsonl, &LoadOptions::default()).unwrap();
        assert_eq!(corpus.dialogues.len(), 2);
        assert!(corpus.dialogues.iter().all(|d| d.len() == 3));
        assert_eq!(corpus.label_set.name, "meld");
    }

    #[test]
    fn empty_file_reports_no_dialogues() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "empty.jsonl", "");
        let err = load_corpus(&p, CorpusFormat::NativeJsonl, &LoadOptions::default()).unwrap_err();
        assert!(err.to_string().contains("no dialogues found"), "{err}");
        let p = write(dir.path(), "train.csv", "");
        let err = load_corpus(&p, CorpusFormat::MeldCsv, &LoadOptions::default()).unwrap_err();
        assert!(err.to_string().contains("no dialogues found"), "{err}");
    }

    #[test]
    fn malformed_native_line_names_file_and_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "bad.jsonl",
            "{\"dialogue_id\":\"a\",\"index\":1,\"speaker\":\"A\",\"text\":\"x\",\"label\":\"joy\",\"split\":\"train\"}\n{not json\n",
        );
        let err = load_corpus(&p, CorpusFormat::NativeJsonl, &LoadOptions::default()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("bad.jsonl:2"), "{msg}");
    }

    #[test]
    fn non_contiguous_native_indices_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "gap.jsonl",
            "{\"dialogue_id\":\"a\",\"index\":1,\"speaker\":\"A\",\"text\":\"x\",\"label\":\"joy\",\"split\":\"train\"}\n\
             {\"dialogue_id\":\"a\",\"index\":3,\"speaker\":\"A\",\"text\":\"y\",\"label\":\"joy\",\"split\":\"train\"}\n",
        );
        assert!(load_corpus(&p, CorpusFormat::NativeJsonl, &LoadOptions::default()).is_err());
    }

    #[test]
    fn meld_csv_groups_sorts_and_reindexes() {
        let dir = tempfile::tempdir().unwrap();
        let csv =
            "Sr No.,Utterance,Speaker,Emotion,Sentiment,Dialogue_ID,Utterance_ID,Season,Episode\n\
                   1,\"Oh, hi.\",Joey,joy,positive,0,1,1,1\n\
                   2,Hey.,Ross,neutral,neutral,0,0,1,1\n\
                   3,\"What?\",Monica,surprise,negative,1,0,1,1\n";
        let p = write(dir.path(), "dev_sent_emo.csv", csv);
        let corpus = load_corpus(&p, CorpusFormat::MeldCsv, &LoadOptions::default()).unwrap();
        assert_eq!(corpus.dialogues.len(), 2);
        let d0 = &corpus.dialogues[0];
        assert_eq!(d0.split, Split::Val);
        assert_eq!(d0.utterances[0].text, "Hey.");
        assert_eq!(d0.utterances[1].speaker.display_name, "Joey");
        assert_eq!(d0.utterances[1].index, 2);
    }

    #[test]
    fn meld_unknown_emotion_lists_classes_and_line() {
        let dir = tempfile::tempdir().unwrap();
        let csv = "Utterance,Speaker,Emotion,Dialogue_ID,Utterance_ID\nhi,Joey,bored,0,0\n";
        let p = write(dir.path(), "train.csv", csv);
        let msg = load_corpus(&p, CorpusFormat::MeldCsv, &LoadOptions::default())
            .unwrap_err()
            .to_string();
        assert!(msg.contains("train.csv:2"), "{msg}");
        assert!(msg.contains("disgust"), "{msg}");
    }

    #[test]
    fn iemocap_json_wrapped_and_bare() {
        let dir = tempfile::tempdir().unwrap();
        let body = r#"{"dialogues":[{"id":"Ses01F_impro01","split":"train","utterances":[
            {"speaker":"Ses01_F","gender":"F","text":"Excuse me.","label":"neu"},
            {"speaker":"Ses01_M","gender":"M","text":"Do you have your forms?","label":"fru"}]}]}"#;
        let p = write(dir.path(), "iemocap.json", body);
        let corpus = load_corpus(&p, CorpusFormat::IemocapJson, &LoadOptions::default()).unwrap();
        assert_eq!(corpus.label_set.len(), 6);
        let d = &corpus.dialogues[0];
        assert_eq!(d.utterances[1].label.class_name, "frustration");
        assert_eq!(d.utterances[0].speaker.gender, Some(Gender::Female));

        let bare = r#"[{"id":"x","split":"test","utterances":[{"speaker":"A","text":"t","label":"sad"}]}]"#;
        let p = write(dir.path(), "bare.json", bare);
        let corpus = load_corpus(&p, CorpusFormat::IemocapJson, &LoadOptions::default()).unwrap();
        assert_eq!(corpus.dialogues[0].split, Split::Test);
    }
}
