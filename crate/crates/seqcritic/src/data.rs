//! Spelling-correction data: corpus splitting, character corruption,
//! batching, and the tiny enumerable task used by the oracles.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, SeqError};
use crate::rng::stream_rng;
use crate::vocab::{TokenId, Vocab};

/// Character corruption: clip to `clip` characters, then replace each
/// character with probability `eta` by one drawn uniformly from the
/// alphabet. The replacement excludes the original character (so `eta` is
/// the exact expected corruption rate) unless `include_original` is set.
#[derive(Debug, Clone)]
pub struct CorruptionSpec {
    pub eta: f64,
    pub clip: usize,
    pub alphabet: Vec<char>,
    pub include_original: bool,
}

impl CorruptionSpec {
    pub fn new(eta: f64, clip: usize, alphabet: Vec<char>) -> CorruptionSpec {
        assert!((0.0..=1.0).contains(&eta), "eta must be in [0, 1]");
        assert!(clip >= 1, "clip must be at least 1");
        CorruptionSpec {
            eta,
            clip,
            alphabet,
            include_original: false,
        }
    }
}

/// Corrupt one sentence; returns (X corrupted, Y clean), both clipped.
/// None if the sentence is empty after clipping.
pub fn corrupt(sentence: &str, spec: &CorruptionSpec, rng: &mut ChaCha8Rng) -> Option<(String, String)> {
    let clean: Vec<char> = sentence.chars().take(spec.clip).collect();
    if clean.is_empty() {
        return None;
    }
    let corrupted: String = clean
        .iter()
        .map(|&c| {
            if rng.random::<f64>() >= spec.eta {
                return c;
            }
            if spec.include_original || spec.alphabet.len() < 2 {
                return spec.alphabet[rng.random_range(0..spec.alphabet.len())];
            }
            // uniform over alphabet \ {original}
            match spec.alphabet.iter().position(|&a| a == c) {
                Some(orig) => {
                    let k = rng.random_range(0..spec.alphabet.len() - 1);
                    spec.alphabet[if k >= orig { k + 1 } else { k }]
                }
                None => spec.alphabet[rng.random_range(0..spec.alphabet.len())],
            }
        })
        .collect();
    Some((corrupted, clean.into_iter().collect()))
}

/// Vocabulary over every character observed in `lines` plus `<unk>`/`<eos>`.
pub fn build_vocab<'a>(lines: impl IntoIterator<Item = &'a str>, with_unk: bool) -> Result<Vocab> {
    let chars: BTreeSet<char> = lines.into_iter().flat_map(str::chars).collect();
    Vocab::from_chars(chars, with_unk)
}

#[derive(Debug, Clone)]
pub struct SplitSizes {
    pub valid: usize,
    pub test: usize,
}

impl Default for SplitSizes {
    fn default() -> Self {
        SplitSizes {
            valid: 500,
            test: 1000,
        }
    }
}

const SPLITS: [&str; 3] = ["train", "valid", "test"];

/// Clip, shuffle, and split a corpus; write one clean-text file, one
/// manifest per split, and the vocabulary. Reruns with the same seed are
/// byte-identical.
pub fn generate_dataset(
    corpus: &Path,
    out_dir: &Path,
    eta: f64,
    clip: usize,
    seed: u64,
    sizes: &SplitSizes,
) -> Result<()> {
    let text = fs::read_to_string(corpus)
        .map_err(|e| SeqError::Data(format!("{}: {e}", corpus.display())))?;
    let mut lines: Vec<String> = text
        .lines()
        .map(|l| l.chars().take(clip).collect::<String>())
        .filter(|l| !l.trim().is_empty())
        .collect();
    if lines.is_empty() {
        return Err(SeqError::Data(format!("{}: empty corpus", corpus.display())));
    }
    if sizes.valid + sizes.test >= lines.len() {
        return Err(SeqError::Data(format!(
            "corpus has {} usable lines, too few for valid={} + test={}",
            lines.len(),
            sizes.valid,
            sizes.test
        )));
    }
    // deterministic shuffle
    let mut rng = stream_rng(seed, "data.split");
    for i in (1..lines.len()).rev() {
        lines.swap(i, rng.random_range(0..=i));
    }
    let (test, rest) = lines.split_at(sizes.test);
    let (valid, train) = rest.split_at(sizes.valid);

    fs::create_dir_all(out_dir)?;
    let vocab = build_vocab(lines.iter().map(String::as_str), true)?;
    fs::write(out_dir.join("vocab.txt"), vocab.tokens().join("\n") + "\n")?;
    for (name, split) in SPLITS.iter().zip([train, valid, test]) {
        fs::write(out_dir.join(format!("{name}.txt")), split.join("\n") + "\n")?;
        let manifest = format!(
            "path={name}.txt\neta={eta}\nclip={clip}\nseed={}\nsize={}\n",
            derive_split_seed(seed, name),
            split.len()
        );
        fs::write(out_dir.join(format!("{name}.manifest")), manifest)?;
    }
    Ok(())
}

fn derive_split_seed(seed: u64, split: &str) -> u64 {
    let mut rng = stream_rng(seed, &format!("data.{split}"));
    rng.random()
}

fn parse_manifest(path: &Path) -> Result<(String, f64, usize, u64, usize)> {
    let text = fs::read_to_string(path)?;
    let (mut p, mut eta, mut clip, mut seed, mut size) = (None, None, None, None, None);
    for line in text.lines() {
        let Some((k, v)) = line.split_once('=') else { continue };
        match k {
            "path" => p = Some(v.to_string()),
            "eta" => eta = v.parse().ok(),
            "clip" => clip = v.parse().ok(),
            "seed" => seed = v.parse().ok(),
            "size" => size = v.parse().ok(),
            other => {
                return Err(SeqError::Data(format!(
                    "{}: unknown manifest key `{other}`",
                    path.display()
                )))
            }
        }
    }
    match (p, eta, clip, seed, size) {
        (Some(p), Some(e), Some(c), Some(s), Some(n)) => Ok((p, e, c, s, n)),
        _ => Err(SeqError::Data(format!(
            "{}: incomplete manifest",
            path.display()
        ))),
    }
}

/// Token pair (X corrupted, Y clean).
pub type Pair = (Vec<TokenId>, Vec<TokenId>);

/// A loaded task: clean training lines (corrupted freshly while streaming)
/// plus fixed, deterministically corrupted validation and test pairs.
#[derive(Debug, Clone)]
pub struct TaskData {
    pub vocab: Vocab,
    pub train_lines: Vec<String>,
    pub spec: CorruptionSpec,
    pub train_seed: u64,
    pub valid: Vec<Pair>,
    pub test: Vec<Pair>,
}

impl TaskData {
    pub fn load(dir: &Path) -> Result<TaskData> {
        let vocab_text = fs::read_to_string(dir.join("vocab.txt"))
            .map_err(|e| SeqError::Data(format!("{}: {e}", dir.join("vocab.txt").display())))?;
        let vocab = Vocab::from_tokens(vocab_text.lines().map(String::from).collect())?;

        let mut split_lines = Vec::new();
        let mut specs = Vec::new();
        for name in SPLITS {
            let (path, eta, clip, seed, size) = parse_manifest(&dir.join(format!("{name}.manifest")))?;
            let text = fs::read_to_string(dir.join(&path))?;
            let lines: Vec<String> = text.lines().map(String::from).collect();
            if lines.len() != size {
                return Err(SeqError::Data(format!(
                    "{name}: manifest says {size} lines, file has {}",
                    lines.len()
                )));
            }
            split_lines.push(lines);
            specs.push((eta, clip, seed));
        }
        let (train_lines, valid_lines, test_lines) =
            (split_lines.remove(0), split_lines.remove(0), split_lines.remove(0));
        let alphabet: Vec<char> = vocab
            .tokens()
            .iter()
            .filter_map(|t| {
                let mut cs = t.chars();
                match (cs.next(), cs.next()) {
                    (Some(c), None) => Some(c),
                    _ => None,
                }
            })
            .collect();
        let spec = CorruptionSpec::new(specs[0].0, specs[0].1, alphabet);
        let valid = corrupt_pairs(&valid_lines, &spec, specs[1].2, &vocab)?;
        let test = corrupt_pairs(&test_lines, &spec, specs[2].2, &vocab)?;
        Ok(TaskData {
            vocab,
            train_lines,
            spec,
            train_seed: specs[0].2,
            valid,
            test,
        })
    }

    /// Enumerable task over a tiny alphabet; the substrate for the
    /// brute-force oracles and toy training runs.
    pub fn toy(eta: f64, seed: u64) -> Result<TaskData> {
        let lines: Vec<String> = ["ab", "abc", "ba", "cab", "bc", "aac", "cba", "ca", "bca", "cc"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let vocab = build_vocab(lines.iter().map(String::as_str), false)?;
        let spec = CorruptionSpec::new(eta, 3, vec!['a', 'b', 'c']);
        let valid = corrupt_pairs(&lines, &spec, seed ^ 0x56414c, &vocab)?;
        let test = corrupt_pairs(&lines, &spec, seed ^ 0x544553, &vocab)?;
        Ok(TaskData {
            vocab,
            train_lines: lines,
            spec,
            train_seed: seed,
            valid,
            test,
        })
    }

    /// Infinite training stream: cycles the clean lines, corrupting afresh
    /// on every pass, deterministic in (train_seed, stream tag).
    pub fn stream(&self, tag: &str) -> PairStream<'_> {
        PairStream {
            data: self,
            rng: stream_rng(self.train_seed, tag),
            cursor: 0,
        }
    }

    /// Corrupt the line under the cursor and advance it, cycling the corpus.
    pub fn pair_at(&self, cursor: &mut usize, rng: &mut ChaCha8Rng) -> Result<Pair> {
        loop {
            let line = &self.train_lines[*cursor % self.train_lines.len()];
            *cursor += 1;
            if let Some((x, y)) = corrupt(line, &self.spec, rng) {
                return Ok((self.vocab.encode(&x)?, self.vocab.encode(&y)?));
            }
        }
    }

    pub fn batch_at(
        &self,
        cursor: &mut usize,
        rng: &mut ChaCha8Rng,
        size: usize,
        pad: TokenId,
    ) -> Result<Batch> {
        let pairs: Vec<Pair> = (0..size)
            .map(|_| self.pair_at(cursor, rng))
            .collect::<Result<_>>()?;
        Ok(Batch::from_pairs(&pairs, pad))
    }
}

fn corrupt_pairs(
    lines: &[String],
    spec: &CorruptionSpec,
    seed: u64,
    vocab: &Vocab,
) -> Result<Vec<Pair>> {
    let mut rng = stream_rng(seed, "data.fixed");
    lines
        .iter()
        .filter_map(|l| corrupt(l, spec, &mut rng))
        .map(|(x, y)| Ok((vocab.encode(&x)?, vocab.encode(&y)?)))
        .collect()
}

pub struct PairStream<'a> {
    data: &'a TaskData,
    rng: ChaCha8Rng,
    cursor: usize,
}

impl PairStream<'_> {
    pub fn next_pair(&mut self) -> Result<Pair> {
        self.data.pair_at(&mut self.cursor, &mut self.rng)
    }

    pub fn next_batch(&mut self, size: usize, pad: TokenId) -> Result<Batch> {
        self.data.batch_at(&mut self.cursor, &mut self.rng, size, pad)
    }
}

/// Padded batch with masks; padded positions are never read by the loss.
#[derive(Debug, Clone)]
pub struct Batch {
    pub x: Vec<Vec<TokenId>>,
    pub x_mask: Vec<Vec<bool>>,
    pub y: Vec<Vec<TokenId>>,
    pub y_mask: Vec<Vec<bool>>,
}

impl Batch {
    pub fn from_pairs(pairs: &[Pair], pad: TokenId) -> Batch {
        let x_max = pairs.iter().map(|(x, _)| x.len()).max().unwrap_or(0);
        let y_max = pairs.iter().map(|(_, y)| y.len()).max().unwrap_or(0);
        let mut batch = Batch {
            x: Vec::with_capacity(pairs.len()),
            x_mask: Vec::with_capacity(pairs.len()),
            y: Vec::with_capacity(pairs.len()),
            y_mask: Vec::with_capacity(pairs.len()),
        };
        for (x, y) in pairs {
            let (xp, xm) = pad_row(x, x_max, pad);
            let (yp, ym) = pad_row(y, y_max, pad);
            batch.x.push(xp);
            batch.x_mask.push(xm);
            batch.y.push(yp);
            batch.y_mask.push(ym);
        }
        batch
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// Row `i` with padding stripped via the mask.
    pub fn unpadded(&self, i: usize) -> Pair {
        let take = |row: &[TokenId], mask: &[bool]| {
            row.iter()
                .zip(mask)
                .filter(|(_, &m)| m)
                .map(|(&t, _)| t)
                .collect()
        };
        (
            take(&self.x[i], &self.x_mask[i]),
            take(&self.y[i], &self.y_mask[i]),
        )
    }
}

fn pad_row(row: &[TokenId], width: usize, pad: TokenId) -> (Vec<TokenId>, Vec<bool>) {
    let mut r = row.to_vec();
    let mut m = vec![true; row.len()];
    r.resize(width, pad);
    m.resize(width, false);
    (r, m)
}

/// Paths produced by `generate_dataset` for a given directory.
pub fn dataset_files(dir: &Path) -> Vec<PathBuf> {
    let mut out = vec![dir.join("vocab.txt")];
    for name in SPLITS {
        out.push(dir.join(format!("{name}.txt")));
        out.push(dir.join(format!("{name}.manifest")));
    }
    out
}
