//! Datasets and continual task streams.
//!
//! Tasks never copy the base images. A [`Task`] keeps shared handles to the
//! base train/test sets, the rows it uses, and (for permuted tasks) the pixel
//! permutation that is applied while a batch is gathered.

use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use flate2::read::GzDecoder;
use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::nn::ClassMask;
use crate::seed;

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

const PERMUTATION_STREAM: u64 = 0x7e57;
const CLASS_STREAM: u64 = 0xc1a5;
const SHUFFLE_STREAM: u64 = 0xba7c;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    images: Matrix,
    labels: Vec<usize>,
    class_count: usize,
}

impl Dataset {
    pub fn new(images: Matrix, labels: Vec<usize>, class_count: usize) -> Result<Self> {
        if images.rows() != labels.len() {
            return Err(Error::CountMismatch {
                images: images.rows(),
                labels: labels.len(),
            });
        }
        if let Some(&label) = labels.iter().find(|&&l| l >= class_count) {
            return Err(Error::LabelOutOfRange {
                label,
                classes: class_count,
            });
        }
        if images.as_slice().iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::Shape("pixel values must lie in [0, 1]".into()));
        }
        Ok(Self {
            images,
            labels,
            class_count,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.images.cols()
    }

    pub fn images(&self) -> &Matrix {
        &self.images
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }
}

/// Train and test halves of a base dataset.
#[derive(Debug, Clone)]
pub struct BaseDataset {
    pub train: Arc<Dataset>,
    pub test: Arc<Dataset>,
}

impl BaseDataset {
    pub fn new(train: Dataset, test: Dataset) -> Result<Self> {
        if train.dim() != test.dim() {
            return Err(Error::Shape(format!(
                "train images have {} pixels, test images {}",
                train.dim(),
                test.dim()
            )));
        }
        Ok(Self {
            train: Arc::new(train),
            test: Arc::new(test),
        })
    }

    pub fn class_count(&self) -> usize {
        self.train.class_count().max(self.test.class_count())
    }
}

fn read_maybe_gz(path: &Path) -> Result<Vec<u8>> {
    let raw = fs::read(path).map_err(|e| Error::io(path, e))?;
    if path.extension().is_some_and(|e| e == "gz") {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice())
            .read_to_end(&mut out)
            .map_err(|e| Error::io(path, e))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn be_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_be_bytes(bytes[at..at + 4].try_into().expect("4 bytes"))
}

fn parse_idx(path: &Path, bytes: &[u8], magic: u32, dims: usize) -> Result<(Vec<usize>, usize)> {
    let header = 4 + 4 * dims;
    if bytes.len() < 4 {
        return Err(Error::Truncated {
            path: path.into(),
            expected: header as u64,
            actual: bytes.len() as u64,
        });
    }
    let found = be_u32(bytes, 0);
    if found != magic {
        return Err(Error::BadMagic {
            path: path.into(),
            expected: magic,
            found,
        });
    }
    if bytes.len() < header {
        return Err(Error::Truncated {
            path: path.into(),
            expected: header as u64,
            actual: bytes.len() as u64,
        });
    }
    let shape: Vec<usize> = (0..dims)
        .map(|i| be_u32(bytes, 4 + 4 * i) as usize)
        .collect();
    let expected = header as u64 + shape.iter().map(|&d| d as u64).product::<u64>();
    if (bytes.len() as u64) < expected {
        return Err(Error::Truncated {
            path: path.into(),
            expected,
            actual: bytes.len() as u64,
        });
    }
    Ok((shape, header))
}

/// Reads an IDX image file and its label file. Files ending in `.gz` are
/// decompressed transparently. Pixels are scaled to `[0, 1]`.
pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<Dataset> {
    let images_path = images_path.as_ref();
    let labels_path = labels_path.as_ref();

    let img = read_maybe_gz(images_path)?;
    let (shape, off) = parse_idx(images_path, &img, IDX_IMAGES_MAGIC, 3)?;
    let (n, dim) = (shape[0], shape[1] * shape[2]);

    let lab = read_maybe_gz(labels_path)?;
    let (lshape, loff) = parse_idx(labels_path, &lab, IDX_LABELS_MAGIC, 1)?;
    if lshape[0] != n {
        return Err(Error::CountMismatch {
            images: n,
            labels: lshape[0],
        });
    }

    let pixels = img[off..off + n * dim]
        .iter()
        .map(|&b| f64::from(b) / 255.0)
        .collect();
    let labels: Vec<usize> = lab[loff..loff + n].iter().map(|&b| b as usize).collect();
    let class_count = labels.iter().max().map_or(0, |m| m + 1);
    Dataset::new(Matrix::from_vec(n, dim, pixels)?, labels, class_count)
}

/// Serializes images (rounded back to bytes) and labels as IDX files.
pub fn write_idx(
    dataset: &Dataset,
    rows: u32,
    cols: u32,
    images_path: impl AsRef<Path>,
    labels_path: impl AsRef<Path>,
) -> Result<()> {
    if (rows * cols) as usize != dataset.dim() {
        return Err(Error::Shape(format!(
            "{rows}x{cols} images do not match {} pixels",
            dataset.dim()
        )));
    }
    let n = dataset.len() as u32;
    let mut img = Vec::with_capacity(16 + dataset.len() * dataset.dim());
    for v in [IDX_IMAGES_MAGIC, n, rows, cols] {
        img.extend_from_slice(&v.to_be_bytes());
    }
    img.extend(
        dataset
            .images()
            .as_slice()
            .iter()
            .map(|&p| (p * 255.0).round() as u8),
    );
    let mut lab = Vec::with_capacity(8 + dataset.len());
    for v in [IDX_LABELS_MAGIC, n] {
        lab.extend_from_slice(&v.to_be_bytes());
    }
    lab.extend(dataset.labels().iter().map(|&l| l as u8));
    let images_path = images_path.as_ref();
    let labels_path = labels_path.as_ref();
    fs::write(images_path, img).map_err(|e| Error::io(images_path, e))?;
    fs::write(labels_path, lab).map_err(|e| Error::io(labels_path, e))?;
    Ok(())
}

fn find_idx(dir: &Path, stem: &str) -> PathBuf {
    let plain = dir.join(stem);
    if plain.exists() {
        return plain;
    }
    let gz = dir.join(format!("{stem}.gz"));
    if gz.exists() {
        return gz;
    }
    plain
}

/// Loads the four standard MNIST files from `dir` (plain or gzipped).
pub fn load_mnist_dir(dir: impl AsRef<Path>) -> Result<BaseDataset> {
    let dir = dir.as_ref();
    let train = load_idx(
        find_idx(dir, "train-images-idx3-ubyte"),
        find_idx(dir, "train-labels-idx1-ubyte"),
    )?;
    let test = load_idx(
        find_idx(dir, "t10k-images-idx3-ubyte"),
        find_idx(dir, "t10k-labels-idx1-ubyte"),
    )?;
    BaseDataset::new(train, test)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TaskKind {
    /// New pixel `p` takes the value of base pixel `perm[p]`.
    Permutation(Vec<usize>),
    ClassSubset(Vec<usize>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone)]
pub struct Task {
    /// 1-based position in the stream.
    pub id: usize,
    pub kind: TaskKind,
    pub head_mask: Option<ClassMask>,
    base: BaseDataset,
    train_rows: Vec<usize>,
    test_rows: Vec<usize>,
}

impl Task {
    pub fn permutation(&self) -> Option<&[usize]> {
        match &self.kind {
            TaskKind::Permutation(p) => Some(p),
            TaskKind::ClassSubset(_) => None,
        }
    }

    pub fn dim(&self) -> usize {
        self.base.train.dim()
    }

    pub fn len(&self, split: Split) -> usize {
        self.rows(split).len()
    }

    pub fn train_len(&self) -> usize {
        self.train_rows.len()
    }

    pub fn test_len(&self) -> usize {
        self.test_rows.len()
    }

    fn rows(&self, split: Split) -> &[usize] {
        match split {
            Split::Train => &self.train_rows,
            Split::Test => &self.test_rows,
        }
    }

    fn source(&self, split: Split) -> &Dataset {
        match split {
            Split::Train => &self.base.train,
            Split::Test => &self.base.test,
        }
    }

    /// Base-dataset row indices used by this task.
    pub fn base_rows(&self, split: Split) -> &[usize] {
        self.rows(split)
    }

    /// Materializes the examples at `positions` (indices into this task's
    /// rows) with the task's permutation applied.
    pub fn gather(&self, split: Split, positions: &[usize]) -> (Matrix, Vec<usize>) {
        let src = self.source(split);
        let rows = self.rows(split);
        let dim = src.dim();
        let mut out = Matrix::zeros(positions.len(), dim);
        let mut labels = Vec::with_capacity(positions.len());
        for (r, &pos) in positions.iter().enumerate() {
            let base_row = rows[pos];
            let from = src.images().row(base_row);
            let to = out.row_mut(r);
            match &self.kind {
                TaskKind::Permutation(perm) => {
                    for (t, &p) in to.iter_mut().zip(perm) {
                        *t = from[p];
                    }
                }
                TaskKind::ClassSubset(_) => to.copy_from_slice(from),
            }
            labels.push(src.labels()[base_row]);
        }
        (out, labels)
    }

    pub fn materialize(&self, split: Split) -> (Matrix, Vec<usize>) {
        let all: Vec<usize> = (0..self.len(split)).collect();
        self.gather(split, &all)
    }

    /// Keeps only the first `n` training examples.
    pub fn truncate_train(&mut self, n: usize) {
        self.train_rows.truncate(n);
    }

    /// Sequential fixed-size chunks of a split, for evaluation.
    pub fn chunks(
        &self,
        split: Split,
        size: usize,
    ) -> impl Iterator<Item = (Matrix, Vec<usize>)> + '_ {
        let size = size.max(1);
        let n = self.len(split);
        (0..n).step_by(size).map(move |start| {
            let positions: Vec<usize> = (start..(start + size).min(n)).collect();
            self.gather(split, &positions)
        })
    }
}

/// Shuffled mini-batches over a task's training examples.
pub struct Batches<'a> {
    task: &'a Task,
    order: Vec<usize>,
    batch_size: usize,
    next: usize,
}

impl Batches<'_> {
    pub fn order(&self) -> &[usize] {
        &self.order
    }
}

impl Iterator for Batches<'_> {
    type Item = (Matrix, Vec<usize>);

    fn next(&mut self) -> Option<Self::Item> {
        if self.next >= self.order.len() {
            return None;
        }
        let end = (self.next + self.batch_size).min(self.order.len());
        let batch = self.task.gather(Split::Train, &self.order[self.next..end]);
        self.next = end;
        Some(batch)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = (self.order.len() - self.next).div_ceil(self.batch_size);
        (left, Some(left))
    }
}

impl ExactSizeIterator for Batches<'_> {}

/// One epoch of mini-batches; the final short batch is kept.
pub fn batches(task: &Task, batch_size: usize, epoch_seed: u64) -> Result<Batches<'_>> {
    if batch_size == 0 {
        return Err(Error::Config("batch size must be at least 1".into()));
    }
    if task.train_len() == 0 {
        return Err(Error::InvalidTasks(format!(
            "task {} has no training data",
            task.id
        )));
    }
    let mut order: Vec<usize> = (0..task.train_len()).collect();
    order.shuffle(&mut seed::rng(epoch_seed, SHUFFLE_STREAM));
    Ok(Batches {
        task,
        order,
        batch_size,
        next: 0,
    })
}

#[derive(Debug, Clone)]
pub struct TaskStream {
    pub tasks: Vec<Task>,
    pub seed: u64,
}

impl TaskStream {
    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    /// Caps every task's training set at its first `n` examples.
    pub fn with_train_subset(mut self, n: Option<usize>) -> Self {
        if let Some(n) = n {
            for t in &mut self.tasks {
                t.truncate_train(n);
            }
        }
        self
    }

    pub fn output_size(&self) -> usize {
        self.tasks.first().map_or(0, |t| t.base.class_count())
    }
}

/// Task 1 sees the identity permutation, later tasks independent uniform
/// permutations drawn from `seed`.
pub fn make_permuted_tasks(base: &BaseDataset, n_tasks: usize, seed: u64) -> Result<TaskStream> {
    if n_tasks < 1 {
        return Err(Error::InvalidTasks("need at least one task".into()));
    }
    let dim = base.train.dim();
    let mut rng = seed::rng(seed, PERMUTATION_STREAM);
    let tasks = (1..=n_tasks)
        .map(|id| {
            let mut perm: Vec<usize> = (0..dim).collect();
            if id > 1 {
                perm.shuffle(&mut rng);
            }
            Task {
                id,
                kind: TaskKind::Permutation(perm),
                head_mask: None,
                base: base.clone(),
                train_rows: (0..base.train.len()).collect(),
                test_rows: (0..base.test.len()).collect(),
            }
        })
        .collect();
    Ok(TaskStream { tasks, seed })
}

/// Partitions the classes into consecutive groups of `classes_per_task`
/// (the last group takes the remainder). With `shuffle_classes` the class
/// order is permuted by `seed` first.
pub fn make_split_tasks(
    base: &BaseDataset,
    classes_per_task: usize,
    seed: u64,
    shuffle_classes: bool,
) -> Result<TaskStream> {
    if classes_per_task < 1 {
        return Err(Error::InvalidTasks(
            "classes_per_task must be at least 1".into(),
        ));
    }
    let mut classes: Vec<usize> = (0..base.class_count()).collect();
    if shuffle_classes {
        classes.shuffle(&mut seed::rng(seed, CLASS_STREAM));
    }
    let filter = |ds: &Dataset, group: &[usize]| -> Vec<usize> {
        ds.labels()
            .iter()
            .enumerate()
            .filter(|(_, l)| group.contains(l))
            .map(|(i, _)| i)
            .collect()
    };
    let tasks = classes
        .chunks(classes_per_task)
        .enumerate()
        .map(|(i, group)| {
            let mut group = group.to_vec();
            group.sort_unstable();
            Task {
                id: i + 1,
                train_rows: filter(&base.train, &group),
                test_rows: filter(&base.test, &group),
                head_mask: Some(ClassMask::new(group.clone())),
                kind: TaskKind::ClassSubset(group),
                base: base.clone(),
            }
        })
        .collect();
    Ok(TaskStream { tasks, seed })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(n: usize, dim: usize, classes: usize) -> Dataset {
        let pixels = (0..n * dim)
            .map(|i| ((i * 37) % 256) as f64 / 255.0)
            .collect();
        let labels = (0..n).map(|i| i % classes).collect();
        Dataset::new(Matrix::from_vec(n, dim, pixels).unwrap(), labels, classes).unwrap()
    }

    fn toy_base() -> BaseDataset {
        BaseDataset::new(toy(50, 6, 5), toy(20, 6, 5)).unwrap()
    }

    #[test]
    fn idx_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let ds = toy(7, 6, 4);
        let (i, l) = (dir.path().join("i"), dir.path().join("l"));
        write_idx(&ds, 2, 3, &i, &l).unwrap();
        let back = load_idx(&i, &l).unwrap();
        assert_eq!(back.len(), 7);
        assert_eq!(back.dim(), 6);
        assert_eq!(back.labels(), ds.labels());
        for (a, b) in back.images().as_slice().iter().zip(ds.images().as_slice()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn idx_gzip_is_transparent() {
        use flate2::write::GzEncoder;
        use std::io::Write;
        let dir = tempfile::tempdir().unwrap();
        let ds = toy(5, 4, 3);
        let (i, l) = (dir.path().join("i"), dir.path().join("l"));
        write_idx(&ds, 2, 2, &i, &l).unwrap();
        let gz = dir.path().join("i.gz");
        let mut enc = GzEncoder::new(Vec::new(), flate2::Compression::default());
        enc.write_all(&fs::read(&i).unwrap()).unwrap();
        fs::write(&gz, enc.finish().unwrap()).unwrap();
        assert_eq!(load_idx(&gz, &l).unwrap(), load_idx(&i, &l).unwrap());
    }

    #[test]
    fn idx_errors_are_distinct() {
        let dir = tempfile::tempdir().unwrap();
        let ds = toy(5, 4, 3);
        let (i, l) = (dir.path().join("i"), dir.path().join("l"));
        write_idx(&ds, 2, 2, &i, &l).unwrap();

        // labels passed where images are expected and vice versa
        assert!(matches!(
            load_idx(&i, &i),
            Err(Error::BadMagic {
                found: IDX_IMAGES_MAGIC,
                expected: IDX_LABELS_MAGIC,
                ..
            })
        ));
        assert!(matches!(load_idx(&l, &l), Err(Error::BadMagic { .. })));

        let bytes = fs::read(&i).unwrap();
        let cut = dir.path().join("cut");
        fs::write(&cut, &bytes[..bytes.len() - 3]).unwrap();
        match load_idx(&cut, &l) {
            Err(Error::Truncated {
                expected, actual, ..
            }) => {
                assert_eq!(expected, 16 + 20);
                assert_eq!(actual, 16 + 17);
            }
            other => panic!("{other:?}"),
        }

        let other = toy(4, 4, 3);
        let (i2, l2) = (dir.path().join("i2"), dir.path().join("l2"));
        write_idx(&other, 2, 2, &i2, &l2).unwrap();
        assert!(matches!(
            load_idx(&i, &l2),
            Err(Error::CountMismatch {
                images: 5,
                labels: 4
            })
        ));
        assert!(matches!(
            load_idx(dir.path().join("missing"), &l),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn single_permuted_task_is_the_base() {
        let base = toy_base();
        let s = make_permuted_tasks(&base, 1, 9).unwrap();
        assert_eq!(s.len(), 1);
        let (x, y) = s.tasks[0].materialize(Split::Train);
        assert_eq!(&x, base.train.images());
        assert_eq!(y, base.train.labels());
        assert!(make_permuted_tasks(&base, 0, 9).is_err());
    }

    #[test]
    fn permutations_are_seeded_bijections() {
        let base = toy_base();
        let a = make_permuted_tasks(&base, 4, 3).unwrap();
        let b = make_permuted_tasks(&base, 4, 3).unwrap();
        for (ta, tb) in a.tasks.iter().zip(&b.tasks) {
            assert_eq!(ta.kind, tb.kind);
            let mut p = ta.permutation().unwrap().to_vec();
            p.sort_unstable();
            assert_eq!(p, (0..6).collect::<Vec<_>>());
        }
        let c = make_permuted_tasks(&base, 4, 4).unwrap();
        assert_ne!(a.tasks[3].kind, c.tasks[3].kind);
    }

    #[test]
    fn permuted_rows_keep_pixel_multiset_and_invert() {
        let base = toy_base();
        let s = make_permuted_tasks(&base, 3, 1).unwrap();
        for task in &s.tasks {
            let (x, y) = task.materialize(Split::Test);
            assert_eq!(y, base.test.labels());
            let perm = task.permutation().unwrap();
            for r in 0..x.rows() {
                let mut got = x.row(r).to_vec();
                let mut want = base.test.images().row(r).to_vec();
                let mut inverted = vec![0.0; perm.len()];
                for (p, &src) in perm.iter().enumerate() {
                    inverted[src] = got[p];
                }
                assert_eq!(inverted, want);
                got.sort_by(f64::total_cmp);
                want.sort_by(f64::total_cmp);
                assert_eq!(got, want);
            }
        }
    }

    #[test]
    fn split_tasks_partition_examples() {
        let base = toy_base();
        let s = make_split_tasks(&base, 2, 0, false).unwrap();
        assert_eq!(s.len(), 3);
        let masks: Vec<Vec<usize>> = s
            .tasks
            .iter()
            .map(|t| t.head_mask.as_ref().unwrap().classes().to_vec())
            .collect();
        assert_eq!(masks, vec![vec![0, 1], vec![2, 3], vec![4]]);
        let mut seen: Vec<usize> = s
            .tasks
            .iter()
            .flat_map(|t| t.base_rows(Split::Train).to_vec())
            .collect();
        assert_eq!(seen.len(), base.train.len());
        seen.sort_unstable();
        assert_eq!(seen, (0..base.train.len()).collect::<Vec<_>>());
        for t in &s.tasks {
            let (_, y) = t.materialize(Split::Train);
            assert!(y.iter().all(|l| t.head_mask.as_ref().unwrap().contains(*l)));
        }
        assert!(make_split_tasks(&base, 0, 0, false).is_err());
    }

    #[test]
    fn split_with_all_classes_is_one_task() {
        let base = toy_base();
        let s = make_split_tasks(&base, 5, 0, false).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s.tasks[0].materialize(Split::Train).0, *base.train.images());
        assert_eq!(
            s.tasks[0].head_mask.as_ref().unwrap().classes(),
            &[0, 1, 2, 3, 4]
        );
    }

    #[test]
    fn shuffled_split_is_disjoint_and_seeded() {
        let base = toy_base();
        let a = make_split_tasks(&base, 2, 5, true).unwrap();
        let b = make_split_tasks(&base, 2, 5, true).unwrap();
        let mut all = Vec::new();
        for (ta, tb) in a.tasks.iter().zip(&b.tasks) {
            assert_eq!(ta.kind, tb.kind);
            all.extend(ta.head_mask.as_ref().unwrap().classes().to_vec());
        }
        all.sort_unstable();
        assert_eq!(all, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn batch_counts_and_coverage() {
        let base = toy_base();
        let s = make_permuted_tasks(&base, 2, 0).unwrap();
        let t = &s.tasks[1];
        let it = batches(t, 16, 3).unwrap();
        assert_eq!(it.len(), 4);
        let order = it.order().to_vec();
        let sizes: Vec<usize> = it
            .map(|(x, y)| {
                assert_eq!(x.rows(), y.len());
                y.len()
            })
            .collect();
        assert_eq!(sizes, vec![16, 16, 16, 2]);
        let mut sorted = order.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..50).collect::<Vec<_>>());
        assert_eq!(batches(t, 16, 3).unwrap().order(), order.as_slice());
        assert_ne!(batches(t, 16, 4).unwrap().order(), order.as_slice());
        assert!(batches(t, 0, 3).is_err());
        let mut empty = t.clone();
        empty.truncate_train(0);
        assert!(batches(&empty, 4, 0).is_err());
    }

    #[test]
    fn mnist_sized_batch_arithmetic() {
        let n = 60_000usize;
        assert_eq!(n.div_ceil(256), 235);
        assert_eq!(n - 234 * 256, 96);
    }

    #[test]
    fn dataset_validation() {
        let x = Matrix::zeros(2, 3);
        assert!(Dataset::new(x.clone(), vec![0], 2).is_err());
        assert!(Dataset::new(x.clone(), vec![0, 2], 2).is_err());
        let bad = Matrix::from_vec(1, 1, vec![1.5]).unwrap();
        assert!(Dataset::new(bad, vec![0], 1).is_err());
    }
}
