//! Aligned patch extraction, dihedral augmentation, LR generation, batching,
//! and the on-disk patch cache.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;

use super::manifest::ImagePair;
use crate::error::{Error, Result};
use crate::model::Mode;
use crate::ops::bicubic_downsample;
use crate::tensor::{Shape, Tensor};
use crate::tensor_io::{read_record, read_u32, write_record, write_u32};

/// Crops per training image.
pub const PATCHES_PER_IMAGE: usize = 30;
/// HDR patch side.
pub const PATCH_SIZE: usize = 256;
/// Spatial factor between HR and LR for joint SR-ITM.
pub const SR_SCALE: usize = 4;

/// Aligned SDR input and HDR target; the HDR patch is `scale` times larger
/// for joint SR-ITM.
#[derive(Clone, Debug, PartialEq)]
pub struct PatchPair {
    pub sdr: Tensor,
    pub hdr: Tensor,
}

impl PatchPair {
    pub fn new(sdr: Tensor, hdr: Tensor) -> Result<Self> {
        let (a, b) = (sdr.shape(), hdr.shape());
        if a.n != 1 || b.n != 1 || a.c != 3 || b.c != 3 {
            return Err(Error::shape(
                "PatchPair",
                "(1, 3, H, W) tensors",
                format!("{a} / {b}"),
            ));
        }
        if b.h % a.h != 0 || b.w % a.w != 0 || b.h / a.h != b.w / a.w {
            return Err(Error::shape(
                "PatchPair",
                "HDR an integer multiple of SDR",
                format!("{a} / {b}"),
            ));
        }
        Ok(PatchPair { sdr, hdr })
    }
}

/// Top-left corner of a crop on the full-resolution grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CropWindow {
    pub y: usize,
    pub x: usize,
    pub size: usize,
}

/// Seeded uniform crop positions. For SR-ITM positions and size are
/// multiples of [`SR_SCALE`] so the LR window is exact.
pub fn crop_windows<R: Rng + ?Sized>(
    height: usize,
    width: usize,
    mode: Mode,
    count: usize,
    size: usize,
    rng: &mut R,
) -> Result<Vec<CropWindow>> {
    if size == 0 || height < size || width < size {
        return Err(Error::InvalidArgument(format!(
            "image {width}x{height} is smaller than the {size}x{size} patch"
        )));
    }
    let step = match mode {
        Mode::Itm => 1,
        Mode::SrItm => {
            if !size.is_multiple_of(SR_SCALE) {
                return Err(Error::InvalidArgument(format!(
                    "sritm patch size {size} must be a multiple of {SR_SCALE}"
                )));
            }
            SR_SCALE
        }
    };
    let max_y = (height - size) / step;
    let max_x = (width - size) / step;
    Ok((0..count)
        .map(|_| CropWindow {
            y: rng.random_range(0..=max_y) * step,
            x: rng.random_range(0..=max_x) * step,
            size,
        })
        .collect())
}

/// `count` aligned crops of side `size` (HDR grid). For SR-ITM the SDR image
/// is downsampled once and the matching LR window is taken.
pub fn crop_patches<R: Rng + ?Sized>(
    pair: &ImagePair,
    mode: Mode,
    count: usize,
    size: usize,
    rng: &mut R,
) -> Result<Vec<PatchPair>> {
    let s = pair.hdr.shape();
    if (s.h, s.w) != (pair.sdr.shape().h, pair.sdr.shape().w) {
        return Err(Error::shape("crop_patches", s, pair.sdr.shape()));
    }
    let windows = crop_windows(s.h, s.w, mode, count, size, rng)?;
    let lr = match mode {
        Mode::Itm => None,
        Mode::SrItm => {
            let (h, w) = (s.h / SR_SCALE * SR_SCALE, s.w / SR_SCALE * SR_SCALE);
            Some(make_lr(&pair.sdr.crop(0, 0, h, w)?, SR_SCALE)?)
        }
    };
    windows
        .iter()
        .map(|win| {
            let hdr = pair.hdr.crop(win.y, win.x, win.size, win.size)?;
            let sdr = match &lr {
                None => pair.sdr.crop(win.y, win.x, win.size, win.size)?,
                Some(lr) => {
                    let k = SR_SCALE;
                    lr.crop(win.y / k, win.x / k, win.size / k, win.size / k)?
                }
            };
            PatchPair::new(sdr, hdr)
        })
        .collect()
}

/// Bicubic `s`-times reduction, clamped to `[0, 1]`.
pub fn make_lr(sdr: &Tensor, s: usize) -> Result<Tensor> {
    bicubic_downsample(sdr, s)
}

/// Element of the dihedral group of the square: optional horizontal flip
/// followed by `rot` quarter turns counter-clockwise.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Dihedral {
    pub flip: bool,
    pub rot: u8,
}

impl Dihedral {
    pub const IDENTITY: Dihedral = Dihedral {
        flip: false,
        rot: 0,
    };

    pub fn all() -> [Dihedral; 8] {
        let mut out = [Self::IDENTITY; 8];
        for (i, d) in out.iter_mut().enumerate() {
            *d = Dihedral {
                flip: i >= 4,
                rot: (i % 4) as u8,
            };
        }
        out
    }

    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Self::all()[rng.random_range(0..8)]
    }

    /// Source coordinate for output `(y, x)` in an `n x n` square.
    pub fn source(&self, y: usize, x: usize, n: usize) -> (usize, usize) {
        // Undo rotations one quarter turn at a time; a CCW turn maps
        // out(y, x) = in(x, n - 1 - y).
        let (mut sy, mut sx) = (y, x);
        for _ in 0..self.rot % 4 {
            (sy, sx) = (sx, n - 1 - sy);
        }
        if self.flip {
            sx = n - 1 - sx;
        }
        (sy, sx)
    }

    pub fn apply(&self, t: &Tensor) -> Result<Tensor> {
        let s = t.shape();
        if s.h != s.w {
            return Err(Error::shape("augment", "square patch", s));
        }
        Ok(Tensor::from_fn(s, |n, c, y, x| {
            let (sy, sx) = self.source(y, x, s.h);
            t.at(n, c, sy, sx)
        }))
    }
}

/// Apply one random dihedral transform identically to both halves.
pub fn augment<R: Rng + ?Sized>(patch: &PatchPair, rng: &mut R) -> Result<PatchPair> {
    let d = Dihedral::random(rng);
    Ok(PatchPair {
        sdr: d.apply(&patch.sdr)?,
        hdr: d.apply(&patch.hdr)?,
    })
}

/// Epoch-wise shuffled mini-batches over a fixed patch set.
pub struct Batcher {
    len: usize,
    batch_size: usize,
}

impl Batcher {
    pub fn new(len: usize, batch_size: usize) -> Result<Self> {
        if len == 0 {
            return Err(Error::Empty("no patches to batch".into()));
        }
        if batch_size == 0 {
            return Err(Error::InvalidArgument(
                "batch size must be at least 1".into(),
            ));
        }
        Ok(Batcher { len, batch_size })
    }

    pub fn batches_per_epoch(&self) -> usize {
        self.len.div_ceil(self.batch_size)
    }

    /// Index batches for one epoch; the last batch may be short.
    pub fn epoch<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<Vec<usize>> {
        let mut order: Vec<usize> = (0..self.len).collect();
        order.shuffle(rng);
        order
            .chunks(self.batch_size)
            .map(<[usize]>::to_vec)
            .collect()
    }
}

/// Stack the selected patches into `(sdr_batch, hdr_batch)`.
pub fn stack_batch(patches: &[PatchPair], indices: &[usize]) -> Result<(Tensor, Tensor)> {
    let sdr: Vec<&Tensor> = indices.iter().map(|&i| &patches[i].sdr).collect();
    let hdr: Vec<&Tensor> = indices.iter().map(|&i| &patches[i].hdr).collect();
    Ok((Tensor::stack(&sdr)?, Tensor::stack(&hdr)?))
}

const CACHE_MAGIC: &[u8; 4] = b"IRNP";
const CACHE_VERSION: u32 = 1;

fn dims(t: &Tensor) -> [usize; 4] {
    t.shape().dims()
}

/// Writes `patch_000000.bin`, `patch_000001.bin`, ... into `dir`.
pub fn write_patch_cache(dir: &Path, patches: &[PatchPair]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (i, p) in patches.iter().enumerate() {
        let path = dir.join(format!("patch_{i:06}.bin"));
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut w = BufWriter::new(file);
        let res = w
            .write_all(CACHE_MAGIC)
            .and_then(|_| write_u32(&mut w, CACHE_VERSION))
            .and_then(|_| write_record(&mut w, "sdr", &dims(&p.sdr), p.sdr.data()))
            .and_then(|_| write_record(&mut w, "hdr", &dims(&p.hdr), p.hdr.data()))
            .and_then(|_| w.flush());
        res.map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

/// Reads every `patch_*.bin` in `dir` in file-name order.
pub fn read_patch_cache(dir: &Path) -> Result<Vec<PatchPair>> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("patch_") && n.ends_with(".bin"))
        })
        .collect();
    files.sort();
    files.iter().map(|p| read_patch(p)).collect()
}

fn read_patch(path: &Path) -> Result<PatchPair> {
    let ctx = |e: Error| Error::Format(format!("{}: {e}", path.display()));
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|_| ctx(Error::Format("truncated header".into())))?;
    if &magic != CACHE_MAGIC {
        return Err(ctx(Error::Format("bad patch magic".into())));
    }
    let version = read_u32(&mut r).map_err(|_| ctx(Error::Format("truncated header".into())))?;
    if version != CACHE_VERSION {
        return Err(ctx(Error::Format(format!("unsupported version {version}"))));
    }
    let mut take = |name: &str| -> Result<Tensor> {
        let rec =
            read_record(&mut r)?.ok_or_else(|| Error::Format(format!("missing {name} record")))?;
        if rec.name != name || rec.dims.len() != 4 {
            return Err(Error::Format(format!("expected rank-4 {name} record")));
        }
        let d = &rec.dims;
        Tensor::from_vec(Shape::new(d[0], d[1], d[2], d[3]), rec.data)
    };
    let sdr = take("sdr").map_err(ctx)?;
    let hdr = take("hdr").map_err(ctx)?;
    PatchPair::new(sdr, hdr).map_err(ctx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ramp(h: usize, w: usize) -> Tensor {
        Tensor::from_fn(Shape::new(1, 3, h, w), |_, c, y, x| {
            ((c * 97 + y * 13 + x * 7) % 251) as f32 / 250.0
        })
    }

    #[test]
    fn default_count_and_bounds() {
        let pair = ImagePair {
            name: "p".into(),
            sdr: ramp(300, 280),
            hdr: ramp(300, 280),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let wins =
            crop_windows(300, 280, Mode::Itm, PATCHES_PER_IMAGE, PATCH_SIZE, &mut rng).unwrap();
        assert_eq!(wins.len(), 30);
        assert!(wins.iter().all(|w| w.y + 256 <= 300 && w.x + 256 <= 280));
        let patches = crop_patches(&pair, Mode::Itm, 30, 256, &mut rng).unwrap();
        assert_eq!(patches.len(), 30);
    }

    #[test]
    fn small_image_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(crop_windows(100, 300, Mode::Itm, 1, 256, &mut rng).is_err());
    }

    #[test]
    fn sritm_windows_align() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pair = ImagePair {
            name: "p".into(),
            sdr: ramp(64, 72),
            hdr: ramp(64, 72),
        };
        let wins = crop_windows(64, 72, Mode::SrItm, 20, 32, &mut rng).unwrap();
        assert!(wins.iter().all(|w| w.y % 4 == 0 && w.x % 4 == 0));
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let lr = make_lr(&pair.sdr, 4).unwrap();
        for (p, w) in crop_patches(&pair, Mode::SrItm, 20, 32, &mut rng)
            .unwrap()
            .iter()
            .zip(&wins)
        {
            assert_eq!(p.sdr.shape(), Shape::new(1, 3, 8, 8));
            assert_eq!(p.hdr.shape(), Shape::new(1, 3, 32, 32));
            assert_eq!(p.sdr, lr.crop(w.y / 4, w.x / 4, 8, 8).unwrap());
        }
    }

    #[test]
    fn hflip_twice_and_rotation_multiset() {
        let t = ramp(6, 6);
        let h = Dihedral { flip: true, rot: 0 };
        assert_eq!(h.apply(&h.apply(&t).unwrap()).unwrap(), t);
        let r = Dihedral {
            flip: false,
            rot: 1,
        }
        .apply(&t)
        .unwrap();
        let mut a = t.data().to_vec();
        let mut b = r.data().to_vec();
        a.sort_by(f32::total_cmp);
        b.sort_by(f32::total_cmp);
        assert_eq!(a, b);
        // Four quarter turns is the identity.
        let mut x = t.clone();
        for _ in 0..4 {
            x = Dihedral {
                flip: false,
                rot: 1,
            }
            .apply(&x)
            .unwrap();
        }
        assert_eq!(x, t);
    }

    #[test]
    fn batches_partition_epoch() {
        let b = Batcher::new(33, 16).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let batches = b.epoch(&mut rng);
        assert_eq!(
            batches.iter().map(Vec::len).collect::<Vec<_>>(),
            vec![16, 16, 1]
        );
        let mut all: Vec<usize> = batches.concat();
        all.sort();
        assert_eq!(all, (0..33).collect::<Vec<_>>());
        let mut rng2 = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(b.epoch(&mut rng2), batches);
        assert!(Batcher::new(0, 4).is_err());
        assert!(Batcher::new(4, 0).is_err());
    }

    #[test]
    fn cache_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let patches = vec![
            PatchPair::new(ramp(4, 4), ramp(16, 16)).unwrap(),
            PatchPair::new(ramp(4, 4).scale(0.5), ramp(16, 16).scale(0.25)).unwrap(),
        ];
        write_patch_cache(dir.path(), &patches).unwrap();
        assert_eq!(read_patch_cache(dir.path()).unwrap(), patches);
        let f = dir.path().join("patch_000000.bin");
        let mut bytes = fs::read(&f).unwrap();
        bytes[0] = b'Z';
        fs::write(&f, bytes).unwrap();
        assert!(read_patch_cache(dir.path()).is_err());
    }
}
