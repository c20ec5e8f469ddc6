//! Monthly HDF5 files: datasets `hr` `[T, 624, 999]` and `lr` `[T, 208, 333]`
//! of 32-bit floats in mm/hour (names and shapes configurable).
//!
//! Talks to the system libhdf5 (1.10 or newer) through a minimal C binding.
//! The serial library is not thread-safe, so every call holds one global
//! lock.

use std::ffi::{c_char, c_int, c_uint, c_void, CString};
use std::path::Path;
use std::sync::Mutex;

use super::{sequence_from_raw, IoError, ReadOptions};
use crate::grid::PrecipSequence;

#[allow(non_camel_case_types)]
type hid_t = i64;
#[allow(non_camel_case_types)]
type herr_t = c_int;
#[allow(non_camel_case_types)]
type hsize_t = u64;

const H5P_DEFAULT: hid_t = 0;
const H5S_ALL: hid_t = 0;
const H5E_DEFAULT: hid_t = 0;
const H5F_ACC_RDONLY: c_uint = 0;
const H5F_ACC_TRUNC: c_uint = 2;
const H5T_FLOAT: c_int = 1;

#[link(name = "hdf5")]
extern "C" {
    fn H5open() -> herr_t;
    fn H5Eset_auto2(estack: hid_t, func: *const c_void, data: *mut c_void) -> herr_t;
    fn H5Fopen(name: *const c_char, flags: c_uint, fapl: hid_t) -> hid_t;
    fn H5Fcreate(name: *const c_char, flags: c_uint, fcpl: hid_t, fapl: hid_t) -> hid_t;
    fn H5Fclose(file: hid_t) -> herr_t;
    fn H5Lexists(loc: hid_t, name: *const c_char, lapl: hid_t) -> c_int;
    fn H5Dopen2(loc: hid_t, name: *const c_char, dapl: hid_t) -> hid_t;
    fn H5Dcreate2(loc: hid_t, name: *const c_char, dtype: hid_t, space: hid_t, lcpl: hid_t, dcpl: hid_t, dapl: hid_t) -> hid_t;
    fn H5Dget_space(dset: hid_t) -> hid_t;
    fn H5Dget_type(dset: hid_t) -> hid_t;
    fn H5Dread(dset: hid_t, mem_type: hid_t, mem_space: hid_t, file_space: hid_t, xfer: hid_t, buf: *mut c_void) -> herr_t;
    fn H5Dwrite(dset: hid_t, mem_type: hid_t, mem_space: hid_t, file_space: hid_t, xfer: hid_t, buf: *const c_void) -> herr_t;
    fn H5Dclose(dset: hid_t) -> herr_t;
    fn H5Screate_simple(rank: c_int, dims: *const hsize_t, maxdims: *const hsize_t) -> hid_t;
    fn H5Sget_simple_extent_ndims(space: hid_t) -> c_int;
    fn H5Sget_simple_extent_dims(space: hid_t, dims: *mut hsize_t, maxdims: *mut hsize_t) -> c_int;
    fn H5Sclose(space: hid_t) -> herr_t;
    fn H5Tget_class(dtype: hid_t) -> c_int;
    fn H5Tclose(dtype: hid_t) -> herr_t;

    static H5T_NATIVE_FLOAT_g: hid_t;
    static H5T_IEEE_F32LE_g: hid_t;
}

static LOCK: Mutex<()> = Mutex::new(());

/// Closes an HDF5 handle on drop.
struct Handle(hid_t, unsafe extern "C" fn(hid_t) -> herr_t);

impl Drop for Handle {
    fn drop(&mut self) {
        // SAFETY: the id was returned valid by the library and is closed once.
        unsafe {
            (self.1)(self.0);
        }
    }
}

fn check(path: &Path, id: hid_t, what: &str) -> Result<hid_t, IoError> {
    if id < 0 {
        Err(IoError::corrupt(path, format!("HDF5 call failed: {what}")))
    } else {
        Ok(id)
    }
}

fn c_string(path: &Path, s: &str) -> Result<CString, IoError> {
    CString::new(s).map_err(|_| IoError::layout(path, format!("name {s:?} contains a NUL byte")))
}

const SIGNATURE: &[u8; 8] = b"\x89HDF\r\n\x1a\n";

/// Looks for the superblock signature at offset 0, 512, 1024, ...
///
/// Checked before opening: some libhdf5 releases leak internal state when
/// asked to open a non-HDF5 file, and then hang at exit.
fn has_signature(path: &Path) -> Result<bool, IoError> {
    use std::io::{Read, Seek, SeekFrom};
    let mut file = std::fs::File::open(path).map_err(|e| IoError::io(path, e))?;
    let len = file.metadata().map_err(|e| IoError::io(path, e))?.len();
    let mut offset = 0u64;
    let mut buf = [0u8; 8];
    while offset + 8 <= len {
        file.seek(SeekFrom::Start(offset)).map_err(|e| IoError::io(path, e))?;
        file.read_exact(&mut buf).map_err(|e| IoError::io(path, e))?;
        if &buf == SIGNATURE {
            return Ok(true);
        }
        offset = if offset == 0 { 512 } else { offset * 2 };
    }
    Ok(false)
}

fn open_checks(path: &Path) -> Result<CString, IoError> {
    if !has_signature(path)? {
        return Err(IoError::corrupt(path, "no HDF5 signature"));
    }
    c_string(path, &path.to_string_lossy())
}

/// Initializes the library and silences its stderr error printing.
///
/// SAFETY: caller holds `LOCK`.
unsafe fn init() {
    H5open();
    H5Eset_auto2(H5E_DEFAULT, std::ptr::null(), std::ptr::null_mut());
}

/// Opens a rank-3 float dataset.
///
/// SAFETY: caller holds `LOCK`; `file` is an open file id.
unsafe fn open_dataset(path: &Path, file: hid_t, name: &str) -> Result<(Handle, [usize; 3]), IoError> {
    let cname = c_string(path, name)?;
    if H5Lexists(file, cname.as_ptr(), H5P_DEFAULT) <= 0 {
        return Err(IoError::layout(path, format!("missing dataset {name:?}")));
    }
    let dset = Handle(check(path, H5Dopen2(file, cname.as_ptr(), H5P_DEFAULT), name)?, H5Dclose);
    let dtype = Handle(check(path, H5Dget_type(dset.0), name)?, H5Tclose);
    if H5Tget_class(dtype.0) != H5T_FLOAT {
        return Err(IoError::layout(path, format!("dataset {name:?} is not floating point")));
    }
    let space = Handle(check(path, H5Dget_space(dset.0), name)?, H5Sclose);
    let rank = H5Sget_simple_extent_ndims(space.0);
    if rank != 3 {
        return Err(IoError::layout(path, format!("dataset {name:?} has rank {rank}, expected 3")));
    }
    let mut dims = [0 as hsize_t; 3];
    if H5Sget_simple_extent_dims(space.0, dims.as_mut_ptr(), std::ptr::null_mut()) < 0 {
        return Err(IoError::corrupt(path, format!("cannot read extent of {name:?}")));
    }
    Ok((dset, dims.map(|d| d as usize)))
}

/// SAFETY: caller holds `LOCK`; `file` is an open file id.
unsafe fn dataset_dims(path: &Path, file: hid_t, name: &str) -> Result<[usize; 3], IoError> {
    open_dataset(path, file, name).map(|(_, dims)| dims)
}

/// Reads a rank-3 float dataset. Returns its dims and values.
///
/// SAFETY: caller holds `LOCK`; `file` is an open file id.
unsafe fn read_dataset(path: &Path, file: hid_t, name: &str) -> Result<([usize; 3], Vec<f32>), IoError> {
    let (dset, dims) = open_dataset(path, file, name)?;
    let mut buf = vec![0f32; dims.iter().product()];
    if !buf.is_empty()
        && H5Dread(dset.0, H5T_NATIVE_FLOAT_g, H5S_ALL, H5S_ALL, H5P_DEFAULT, buf.as_mut_ptr().cast()) < 0
    {
        return Err(IoError::corrupt(path, format!("cannot read {name:?}")));
    }
    Ok((dims, buf))
}

/// Reads and validates the HR/LR pair of one monthly file.
pub fn read_hdf5_pair(path: &Path, options: &ReadOptions) -> Result<(PrecipSequence, PrecipSequence), IoError> {
    let cpath = open_checks(path)?;
    let (hr, lr) = {
        let _guard = LOCK.lock().unwrap_or_else(|e| e.into_inner());
        // SAFETY: lock held; handles are closed by `Handle` before release.
        unsafe {
            init();
            let file = Handle(check(path, H5Fopen(cpath.as_ptr(), H5F_ACC_RDONLY, H5P_DEFAULT), "open")?, H5Fclose);
            let hr = read_dataset(path, file.0, &options.hdf5_hr_name)?;
            let lr = read_dataset(path, file.0, &options.hdf5_lr_name)?;
            (hr, lr)
        }
    };
    for ((dims, _), name, g) in [
        (&hr, &options.hdf5_hr_name, &options.hr_geometry),
        (&lr, &options.hdf5_lr_name, &options.lr_geometry),
    ] {
        if dims[1] != g.rows() || dims[2] != g.cols() {
            return Err(IoError::layout(
                path,
                format!("dataset {name:?} is {:?}, expected [T, {}, {}]", dims, g.rows(), g.cols()),
            ));
        }
    }
    if hr.0[0] != lr.0[0] || hr.0[0] == 0 {
        return Err(IoError::layout(path, format!("HR has {} frames, LR has {}", hr.0[0], lr.0[0])));
    }
    let frames = hr.0[0];
    let sentinel = options.missing_sentinel;
    Ok((
        sequence_from_raw(path, &options.hdf5_hr_name, options.hr_geometry, &hr.1, frames, sentinel)?,
        sequence_from_raw(path, &options.hdf5_lr_name, options.lr_geometry, &lr.1, frames, sentinel)?,
    ))
}

/// Dataset shapes `(hr, lr)` without reading any values.
pub fn probe_hdf5(path: &Path, options: &ReadOptions) -> Result<([usize; 3], [usize; 3]), IoError> {
    let cpath = open_checks(path)?;
    let _guard = LOCK.lock().unwrap_or_else(|e| e.into_inner());
    // SAFETY: lock held; handles are closed by `Handle` before release.
    unsafe {
        init();
        let file = Handle(check(path, H5Fopen(cpath.as_ptr(), H5F_ACC_RDONLY, H5P_DEFAULT), "open")?, H5Fclose);
        let hr = dataset_dims(path, file.0, &options.hdf5_hr_name)?;
        let lr = dataset_dims(path, file.0, &options.hdf5_lr_name)?;
        Ok((hr, lr))
    }
}

/// One dataset to write: name, `[T, rows, cols]` and row-major values.
pub struct DatasetSpec<'a> {
    pub name: &'a str,
    pub dims: [usize; 3],
    pub values: &'a [f32],
}

/// Writes float32 datasets to a new file, replacing any existing one.
pub fn write_hdf5(path: &Path, datasets: &[DatasetSpec<'_>]) -> Result<(), IoError> {
    for d in datasets {
        if d.values.len() != d.dims.iter().product::<usize>() {
            return Err(IoError::layout(path, format!("dataset {:?}: values do not fill {:?}", d.name, d.dims)));
        }
    }
    let cpath = c_string(path, &path.to_string_lossy())?;
    let _guard = LOCK.lock().unwrap_or_else(|e| e.into_inner());
    // SAFETY: lock held; buffers outlive the calls; handles closed on drop.
    unsafe {
        init();
        let file = H5Fcreate(cpath.as_ptr(), H5F_ACC_TRUNC, H5P_DEFAULT, H5P_DEFAULT);
        if file < 0 {
            return Err(IoError::io(path, std::io::Error::other("cannot create HDF5 file")));
        }
        let file = Handle(file, H5Fclose);
        for d in datasets {
            let name = c_string(path, d.name)?;
            let dims = d.dims.map(|x| x as hsize_t);
            let space = Handle(check(path, H5Screate_simple(3, dims.as_ptr(), std::ptr::null()), d.name)?, H5Sclose);
            let dset = Handle(
                check(
                    path,
                    H5Dcreate2(file.0, name.as_ptr(), H5T_IEEE_F32LE_g, space.0, H5P_DEFAULT, H5P_DEFAULT, H5P_DEFAULT),
                    d.name,
                )?,
                H5Dclose,
            );
            if !d.values.is_empty()
                && H5Dwrite(dset.0, H5T_NATIVE_FLOAT_g, H5S_ALL, H5S_ALL, H5P_DEFAULT, d.values.as_ptr().cast()) < 0
            {
                return Err(IoError::io(path, std::io::Error::other(format!("cannot write {:?}", d.name))));
            }
        }
    }
    Ok(())
}

fn flatten(seq: &PrecipSequence) -> Vec<f32> {
    seq.iter().flat_map(|f| f.values().iter().map(|v| *v as f32)).collect()
}

/// Writes an HR/LR pair in the monthly-file layout.
pub fn write_hdf5_pair(path: &Path, hr: &PrecipSequence, lr: &PrecipSequence, options: &ReadOptions) -> Result<(), IoError> {
    let (h, l) = (flatten(hr), flatten(lr));
    let dims = |s: &PrecipSequence| [s.len(), s.geometry().rows(), s.geometry().cols()];
    write_hdf5(
        path,
        &[
            DatasetSpec {
                name: &options.hdf5_hr_name,
                dims: dims(hr),
                values: &h,
            },
            DatasetSpec {
                name: &options.hdf5_lr_name,
                dims: dims(lr),
                values: &l,
            },
        ],
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{GridGeometry, PrecipSequence};

    fn small_options() -> ReadOptions {
        ReadOptions {
            hr_geometry: GridGeometry::new(6, 9, 4.0).unwrap(),
            lr_geometry: GridGeometry::new(2, 3, 12.0).unwrap(),
            ..ReadOptions::default()
        }
    }

    fn seq(g: GridGeometry, frames: usize) -> PrecipSequence {
        let bufs = (0..frames).map(|t| (0..g.len()).map(|i| (i * 7 + t) as f64 * 0.25).collect()).collect();
        PrecipSequence::from_buffers(g, bufs, 0).unwrap()
    }

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("2010-09.h5");
        let opts = small_options();
        let (hr, lr) = (seq(opts.hr_geometry, 3), seq(opts.lr_geometry, 3));
        write_hdf5_pair(&path, &hr, &lr, &opts).unwrap();
        let (hr2, lr2) = read_hdf5_pair(&path, &opts).unwrap();
        assert_eq!(hr, hr2);
        assert_eq!(lr, lr2);
    }

    #[test]
    fn full_size_layout_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.h5");
        let hr = vec![0f32; 624 * 998];
        let lr = vec![0f32; 208 * 333];
        write_hdf5(
            &path,
            &[
                DatasetSpec {
                    name: "hr",
                    dims: [1, 624, 998],
                    values: &hr,
                },
                DatasetSpec {
                    name: "lr",
                    dims: [1, 208, 333],
                    values: &lr,
                },
            ],
        )
        .unwrap();
        let err = read_hdf5_pair(&path, &ReadOptions::default()).unwrap_err();
        assert!(matches!(err, IoError::LayoutMismatch { .. }), "{err}");
    }

    #[test]
    fn missing_dataset_and_garbage_file() {
        let dir = tempfile::tempdir().unwrap();
        let opts = small_options();
        let path = dir.path().join("one.h5");
        let v = vec![0f32; 54];
        write_hdf5(
            &path,
            &[DatasetSpec {
                name: "hr",
                dims: [1, 6, 9],
                values: &v,
            }],
        )
        .unwrap();
        assert!(matches!(read_hdf5_pair(&path, &opts), Err(IoError::LayoutMismatch { .. })));

        let junk = dir.path().join("junk.h5");
        std::fs::write(&junk, b"not an hdf5 file").unwrap();
        assert!(matches!(read_hdf5_pair(&junk, &opts), Err(IoError::CorruptFile { .. })));
        assert!(matches!(
            read_hdf5_pair(&dir.path().join("absent.h5"), &opts),
            Err(IoError::IoFailure { .. })
        ));
    }

    #[test]
    fn negative_values_need_a_sentinel() {
        let dir = tempfile::tempdir().unwrap();
        let mut opts = small_options();
        let path = dir.path().join("neg.h5");
        let mut hr = vec![1f32; 54];
        hr[5] = -1.0;
        let lr = vec![1f32; 6];
        write_hdf5(
            &path,
            &[
                DatasetSpec {
                    name: "hr",
                    dims: [1, 6, 9],
                    values: &hr,
                },
                DatasetSpec {
                    name: "lr",
                    dims: [1, 2, 3],
                    values: &lr,
                },
            ],
        )
        .unwrap();
        assert!(matches!(read_hdf5_pair(&path, &opts), Err(IoError::NegativeValue { index: 5, .. })));
        opts.missing_sentinel = Some(-1.0);
        let (hr, _) = read_hdf5_pair(&path, &opts).unwrap();
        assert_eq!(hr.frames()[0].values()[5], 0.0);
    }
}
