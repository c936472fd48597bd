//! Knowledge archives: per source task and generation, a fitness-sorted
//! population and its fitness column, plus the `.okar` file format.
//!
//! File layout (all integers and floats little-endian):
//!
//! ```text
//! "OKAR"  u16 version
//! u32 K  u32 T  u32 N  u32 d
//! u32 provenance length, provenance: u64 seed, u64 descriptor hash, UTF-8 optimizer id
//! for k in 0..K, t in 0..T: N·d f64 population (row-major), N f64 fitness
//! u64 FNV-1a checksum of all preceding bytes
//! ```

mod framing;
mod params_file;

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;

pub use framing::fnv1a64;
pub use params_file::{decode_params, encode_params, read_params, write_params};

use crate::error::{Error, FormatError, Result};
use crate::gradengine::Tensor2;
use framing::{FrameReader, FrameWriter};

pub const ARCHIVE_MAGIC: [u8; 4] = *b"OKAR";
pub const ARCHIVE_VERSION: u16 = 1;

/// Bytes before the payload, excluding the provenance text.
pub const FIXED_HEADER_BYTES: usize = 4 + 2 + 4 * 4 + 4 + 16;
/// Checksum trailer.
pub const FRAMING_BYTES: usize = 8;

/// Where an archive came from.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Provenance {
    /// Source optimizer id, e.g. `ga` or `pso`.
    pub optimizer: String,
    pub seed: u64,
    /// FNV-1a hash of the instance descriptor text.
    pub descriptor_hash: u64,
}

/// One `(P_k^(t), F_k^(t))` record.
#[derive(Clone, Debug, PartialEq)]
pub struct ArchiveEntry {
    pub population: Tensor2,
    pub fitness: Tensor2,
}

/// Dense `K×T` grid of fitness-sorted populations.
#[derive(Clone, Debug, PartialEq)]
pub struct KnowledgeArchive {
    tasks: usize,
    generations: usize,
    pop_size: usize,
    dim: usize,
    entries: Vec<ArchiveEntry>,
    provenance: Provenance,
}

impl KnowledgeArchive {
    /// `entries` are k-major: index `k * generations + t`.
    pub fn new(
        tasks: usize,
        generations: usize,
        pop_size: usize,
        dim: usize,
        entries: Vec<ArchiveEntry>,
        provenance: Provenance,
    ) -> Result<Self> {
        if tasks == 0 || generations == 0 || pop_size == 0 || dim == 0 {
            return Err(Error::Parameter(
                "archive dimensions K, T, N, d must all be positive".into(),
            ));
        }
        if entries.len() != tasks * generations {
            return Err(Error::shape(
                "KnowledgeArchive::new",
                format!("{} entries for a {tasks}x{generations} grid", entries.len()),
            ));
        }
        for (i, e) in entries.iter().enumerate() {
            let (k, t) = (i / generations, i % generations);
            if e.population.shape() != (pop_size, dim) || e.fitness.shape() != (pop_size, 1) {
                return Err(Error::shape(
                    "KnowledgeArchive::new",
                    format!(
                        "entry ({k},{t}) has population {:?} and fitness {:?}",
                        e.population.shape(),
                        e.fitness.shape()
                    ),
                ));
            }
            if e.population
                .data()
                .iter()
                .any(|&v| !(0.0..=1.0).contains(&v))
            {
                return Err(Error::Parameter(format!(
                    "entry ({k},{t}) has coordinates outside [0, 1]"
                )));
            }
            if e.fitness.data().windows(2).any(|w| w[0] > w[1]) {
                return Err(Error::Parameter(format!(
                    "entry ({k},{t}) is not sorted by fitness"
                )));
            }
        }
        Ok(Self {
            tasks,
            generations,
            pop_size,
            dim,
            entries,
            provenance,
        })
    }

    pub fn tasks(&self) -> usize {
        self.tasks
    }

    pub fn generations(&self) -> usize {
        self.generations
    }

    pub fn pop_size(&self) -> usize {
        self.pop_size
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn entries(&self) -> &[ArchiveEntry] {
        &self.entries
    }

    pub fn get(&self, task: usize, generation: usize) -> &ArchiveEntry {
        assert!(task < self.tasks && generation < self.generations);
        &self.entries[task * self.generations + generation]
    }

    /// `K·(T-1)` consecutive-generation pairs.
    pub fn pair_count(&self) -> usize {
        self.tasks * (self.generations - 1)
    }

    pub fn transition(&self, pair: PairIndex) -> Transition<'_> {
        let cur = self.get(pair.task, pair.generation);
        let next = self.get(pair.task, pair.generation + 1);
        Transition {
            pair,
            population: &cur.population,
            fitness: &cur.fitness,
            next_population: &next.population,
            next_fitness: &next.fitness,
        }
    }

    /// Exact encoded size in bytes.
    pub fn encoded_len(&self) -> usize {
        FIXED_HEADER_BYTES
            + self.provenance.optimizer.len()
            + self.tasks * self.generations * (self.pop_size * self.dim + self.pop_size) * 8
            + FRAMING_BYTES
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut w = FrameWriter::with_capacity(ARCHIVE_MAGIC, ARCHIVE_VERSION, self.encoded_len());
        for v in [self.tasks, self.generations, self.pop_size, self.dim] {
            w.u32(u32::try_from(v).expect("archive dimension fits in u32"));
        }
        let mut prov = Vec::with_capacity(16 + self.provenance.optimizer.len());
        prov.extend_from_slice(&self.provenance.seed.to_le_bytes());
        prov.extend_from_slice(&self.provenance.descriptor_hash.to_le_bytes());
        prov.extend_from_slice(self.provenance.optimizer.as_bytes());
        w.block(&prov);
        for e in &self.entries {
            w.f64s(e.population.data());
            w.f64s(e.fitness.data());
        }
        w.finish()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = FrameReader::open(bytes, ARCHIVE_MAGIC, ARCHIVE_VERSION)?;
        let tasks = r.u32()? as usize;
        let generations = r.u32()? as usize;
        let pop_size = r.u32()? as usize;
        let dim = r.u32()? as usize;
        let prov = r.block()?;
        if prov.len() < 16 {
            return Err(FormatError::Malformed("provenance block too short".into()).into());
        }
        let seed = u64::from_le_bytes(prov[..8].try_into().expect("8 bytes"));
        let descriptor_hash = u64::from_le_bytes(prov[8..16].try_into().expect("8 bytes"));
        let optimizer = std::str::from_utf8(&prov[16..])
            .map_err(|_| FormatError::Malformed("optimizer id is not UTF-8".into()))?
            .to_string();
        let per_entry = pop_size
            .checked_mul(dim)
            .and_then(|x| x.checked_add(pop_size))
            .ok_or_else(|| FormatError::Malformed("archive dimensions overflow".into()))?;
        let payload = per_entry
            .checked_mul(tasks)
            .and_then(|x| x.checked_mul(generations))
            .and_then(|x| x.checked_mul(8))
            .ok_or_else(|| FormatError::Malformed("archive dimensions overflow".into()))?;
        r.require(payload)?;
        r.verify_checksum()?;
        let mut entries = Vec::with_capacity(tasks * generations);
        for _ in 0..tasks * generations {
            let population = Tensor2::new(pop_size, dim, r.f64s(pop_size * dim)?)?;
            let fitness = Tensor2::new(pop_size, 1, r.f64s(pop_size)?)?;
            entries.push(ArchiveEntry {
                population,
                fitness,
            });
        }
        r.finish()?;
        Self::new(
            tasks,
            generations,
            pop_size,
            dim,
            entries,
            Provenance {
                optimizer,
                seed,
                descriptor_hash,
            },
        )
    }

    /// Header plus best fitness of every `(k, t)` record, as text.
    pub fn describe(&self) -> String {
        let mut s = String::new();
        let p = &self.provenance;
        writeln!(
            s,
            "K={} T={} N={} d={} optimizer={} seed={} descriptor={:016x}",
            self.tasks,
            self.generations,
            self.pop_size,
            self.dim,
            p.optimizer,
            p.seed,
            p.descriptor_hash
        )
        .expect("write to String");
        s.push_str("task,generation,best\n");
        for k in 0..self.tasks {
            for t in 0..self.generations {
                writeln!(s, "{k},{t},{}", self.get(k, t).fitness.get(0, 0))
                    .expect("write to String");
            }
        }
        s
    }
}

pub fn write_archive(archive: &KnowledgeArchive, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, archive.encode())?;
    Ok(())
}

pub fn read_archive(path: impl AsRef<Path>) -> Result<KnowledgeArchive> {
    KnowledgeArchive::decode(&fs::read(path)?)
}

/// Position of a `(t, t+1)` pair in the archive grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PairIndex {
    pub task: usize,
    pub generation: usize,
}

/// `(P_k^(t), F_k^(t), P_k^(t+1))` plus the fitness of the next generation,
/// which orders its rows.
#[derive(Clone, Copy, Debug)]
pub struct Transition<'a> {
    pub pair: PairIndex,
    pub population: &'a Tensor2,
    pub fitness: &'a Tensor2,
    pub next_population: &'a Tensor2,
    pub next_fitness: &'a Tensor2,
}

/// Shuffled minibatches covering every pair exactly once (one epoch).
pub fn pair_iterator<'a, R: Rng + ?Sized>(
    archive: &'a KnowledgeArchive,
    batch_size: usize,
    rng: &mut R,
) -> Result<impl Iterator<Item = Vec<Transition<'a>>> + 'a> {
    if archive.generations < 2 {
        return Err(Error::Usage(
            "archive needs at least two generations to form training pairs".into(),
        ));
    }
    if batch_size == 0 {
        return Err(Error::Parameter("batch size must be positive".into()));
    }
    let mut pairs: Vec<PairIndex> = (0..archive.tasks)
        .flat_map(|task| {
            (0..archive.generations - 1).map(move |generation| PairIndex { task, generation })
        })
        .collect();
    pairs.shuffle(rng);
    let batches: Vec<Vec<PairIndex>> = pairs.chunks(batch_size).map(<[_]>::to_vec).collect();
    Ok(batches
        .into_iter()
        .map(move |b| b.into_iter().map(|p| archive.transition(p)).collect()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    pub(crate) fn toy_archive(
        tasks: usize,
        generations: usize,
        n: usize,
        d: usize,
    ) -> KnowledgeArchive {
        let entries = (0..tasks * generations)
            .map(|i| ArchiveEntry {
                population: Tensor2::from_fn(n, d, |r, c| {
                    ((i * 31 + r * 7 + c) % 97) as f64 / 96.0
                }),
                fitness: Tensor2::from_fn(n, 1, |r, _| r as f64 + i as f64 * 0.01),
            })
            .collect();
        KnowledgeArchive::new(
            tasks,
            generations,
            n,
            d,
            entries,
            Provenance {
                optimizer: "ga".into(),
                seed: 3,
                descriptor_hash: 0xabcdef,
            },
        )
        .unwrap()
    }

    #[test]
    fn rejects_unsorted_or_out_of_range() {
        let mut a = toy_archive(1, 2, 3, 2).entries.clone();
        a[0].fitness = Tensor2::column(&[2.0, 1.0, 3.0]).unwrap();
        let prov = toy_archive(1, 1, 1, 1).provenance.clone();
        assert!(KnowledgeArchive::new(1, 2, 3, 2, a, prov.clone()).is_err());
        let mut b = toy_archive(1, 2, 3, 2).entries.clone();
        b[1].population = Tensor2::filled(3, 2, 1.5);
        assert!(KnowledgeArchive::new(1, 2, 3, 2, b, prov).is_err());
    }

    #[test]
    fn encode_decode_identity() {
        let a = toy_archive(2, 3, 4, 3);
        let bytes = a.encode();
        assert_eq!(bytes.len(), a.encoded_len());
        let back = KnowledgeArchive::decode(&bytes).unwrap();
        assert_eq!(back, a);
        assert_eq!(back.encode(), bytes);
    }

    #[test]
    fn distinct_decode_errors() {
        let bytes = toy_archive(1, 2, 2, 2).encode();
        let mut flipped = bytes.clone();
        let mid = FIXED_HEADER_BYTES + 10;
        flipped[mid] ^= 0x01;
        assert!(matches!(
            KnowledgeArchive::decode(&flipped),
            Err(Error::Format(FormatError::ChecksumMismatch { .. }))
        ));
        assert!(matches!(
            KnowledgeArchive::decode(&bytes[..bytes.len() - 20]),
            Err(Error::Format(FormatError::Truncated { .. }))
        ));
        let mut ver = bytes.clone();
        ver[4] = 9;
        assert!(matches!(
            KnowledgeArchive::decode(&ver),
            Err(Error::Format(FormatError::VersionMismatch { found: 9, .. }))
        ));
        let mut magic = bytes;
        magic[0] = b'X';
        assert!(matches!(
            KnowledgeArchive::decode(&magic),
            Err(Error::Format(FormatError::BadMagic { .. }))
        ));
    }

    #[test]
    fn size_arithmetic_for_a_full_suite_archive() {
        // K=10, T=250, N=20, d=50, optimizer "ga".
        let expected = FIXED_HEADER_BYTES + 2 + 10 * 250 * (20 * 50 + 20) * 8 + FRAMING_BYTES;
        let a = KnowledgeArchive {
            tasks: 10,
            generations: 250,
            pop_size: 20,
            dim: 50,
            entries: vec![],
            provenance: Provenance {
                optimizer: "ga".into(),
                seed: 0,
                descriptor_hash: 0,
            },
        };
        assert_eq!(a.encoded_len(), expected);
        assert_eq!(expected, 20_400_052);
    }

    #[test]
    fn pair_iterator_covers_each_pair_once() {
        let a = toy_archive(2, 3, 2, 2);
        let mut r = rng::seeded(1);
        let batches: Vec<_> = pair_iterator(&a, 3, &mut r).unwrap().collect();
        assert_eq!(batches.iter().map(Vec::len).sum::<usize>(), 4);
        assert_eq!(batches.len(), 2);
        let single: Vec<_> = pair_iterator(&a, 100, &mut r).unwrap().collect();
        assert_eq!(single.len(), 1);

        let mut seen: Vec<_> = batches.iter().flatten().map(|t| t.pair).collect();
        seen.sort();
        seen.dedup();
        assert_eq!(seen.len(), 4);
        assert!(pair_iterator(&toy_archive(2, 1, 2, 2), 4, &mut r).is_err());
    }

    #[test]
    fn describe_lists_every_record() {
        let a = toy_archive(2, 3, 2, 2);
        let text = a.describe();
        assert!(text.starts_with("K=2 T=3 N=2 d=2 optimizer=ga seed=3"));
        assert_eq!(text.lines().count(), 2 + 6);
    }
}
