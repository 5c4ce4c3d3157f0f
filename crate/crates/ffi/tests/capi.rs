use std::ffi::{CStr, CString};
use std::ptr;

use viewalign::store::{synth_store, write_store};
use viewalign_ffi::*;

fn open(path: &std::path::Path) -> *mut VaStore {
    let c = CString::new(path.to_str().unwrap()).unwrap();
    let mut h = ptr::null_mut();
    assert_eq!(unsafe { va_store_open(c.as_ptr(), &mut h) }, VaStatus::Ok);
    assert!(!h.is_null());
    h
}

fn last_error() -> String {
    let p = va_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn store_round_trip_through_handle() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.bin");
    let set = synth_store(6, 3, 4, 1, None).unwrap();
    write_store(&set, &path).unwrap();
    let h = open(&path);
    let (mut n, mut c, mut d) = (0, 0, 0);
    unsafe {
        assert_eq!(va_store_dims(h, &mut n, &mut c, &mut d), VaStatus::Ok);
        assert_eq!((n, c, d), (6, 3, 4));
        let mut text = vec![0f32; n * c * d];
        assert_eq!(va_store_copy_text(h, text.as_mut_ptr(), text.len()), VaStatus::Ok);
        assert_eq!(text, set.text_data());
        let mut image = vec![0f32; n * d];
        assert_eq!(va_store_copy_image(h, image.as_mut_ptr(), 3), VaStatus::BufferTooSmall);
        assert!(last_error().contains("needs 24"));
        assert_eq!(va_store_copy_image(h, image.as_mut_ptr(), image.len()), VaStatus::Ok);
        assert_eq!(image, set.image_data());

        let mut prof = vec![0f64; n * c];
        assert_eq!(va_store_profile(h, 0.1, prof.as_mut_ptr(), prof.len()), VaStatus::Ok);
        for row in prof.chunks(c) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        let mut w = 0;
        assert_eq!(va_fused_dim(h, VaFusion::Concat, &mut w), VaStatus::Ok);
        assert_eq!(w, 12);
        let mut fused = vec![0f64; n * w];
        assert_eq!(va_store_fuse(h, VaFusion::Concat, 0.1, fused.as_mut_ptr(), fused.len()), VaStatus::Ok);
        assert_eq!(fused[5], set.text(0, 1)[1] as f64);
        assert_eq!(va_store_profile(h, 0.0, prof.as_mut_ptr(), prof.len()), VaStatus::InvalidArgument);
        va_store_free(h);
    }
}

#[test]
fn open_failures_map_to_status() {
    let dir = tempfile::tempdir().unwrap();
    let missing = CString::new(dir.path().join("none.bin").to_str().unwrap()).unwrap();
    let mut h = ptr::null_mut();
    assert_eq!(unsafe { va_store_open(missing.as_ptr(), &mut h) }, VaStatus::Io);
    assert!(h.is_null());

    let path = dir.path().join("s.bin");
    write_store(&synth_store(2, 1, 2, 0, None).unwrap(), &path).unwrap();
    let mut bytes = std::fs::read(&path).unwrap();
    bytes[25] ^= 0xFF;
    std::fs::write(&path, bytes).unwrap();
    let c = CString::new(path.to_str().unwrap()).unwrap();
    assert_eq!(unsafe { va_store_open(c.as_ptr(), &mut h) }, VaStatus::InvalidData);
    assert!(last_error().contains("checksum"));
    assert_eq!(unsafe { va_store_open(ptr::null(), &mut h) }, VaStatus::NullPointer);
    unsafe { va_store_free(ptr::null_mut()) };
}

#[test]
fn scalar_kernels() {
    let a = [1f32, 0.0, 0.0];
    let b = [1f32, 1.0, 0.0];
    let mut out = 0.0;
    assert_eq!(unsafe { va_cosine_similarity(a.as_ptr(), b.as_ptr(), 3, &mut out) }, VaStatus::Ok);
    assert!((out - 0.5f64.sqrt()).abs() < 1e-7);
    let zero = [0f32; 3];
    assert_eq!(unsafe { va_cosine_similarity(a.as_ptr(), zero.as_ptr(), 3, &mut out) }, VaStatus::InvalidData);

    let views = [1f32, 0.0, 0.0, 1.0];
    let image = [1f32, 0.0];
    let mut s = [0f64; 2];
    assert_eq!(unsafe { va_view_scores(views.as_ptr(), 2, 2, image.as_ptr(), 0.1, s.as_mut_ptr()) }, VaStatus::Ok);
    let expect = 1.0 / (1.0 + (-10.0f64).exp());
    assert!((s[0] - expect).abs() < 1e-12);

    let ranking = [3usize, 1, 2, 0];
    let targets = [1usize];
    let (mut r, mut n) = (0.0, 0.0);
    unsafe {
        assert_eq!(va_recall_at_k(ranking.as_ptr(), 4, targets.as_ptr(), 1, 2, &mut r), VaStatus::Ok);
        assert_eq!(va_ndcg_at_k(ranking.as_ptr(), 4, targets.as_ptr(), 1, 2, &mut n), VaStatus::Ok);
        assert_eq!(va_ndcg_at_k(ranking.as_ptr(), 4, ptr::null(), 0, 2, &mut n), VaStatus::InvalidArgument);
    }
    assert_eq!(r, 1.0);
    assert!((n - 1.0 / 3f64.log2()).abs() < 1e-12);

    let mut buf = [0 as std::ffi::c_char; 16];
    assert_eq!(unsafe { va_density_percent(19445, 7050, 160792, 3, buf.as_mut_ptr(), 16) }, VaStatus::Ok);
    assert_eq!(unsafe { CStr::from_ptr(buf.as_ptr()) }.to_str().unwrap(), "0.117%");
    assert_eq!(unsafe { va_density_percent(19445, 7050, 160792, 3, buf.as_mut_ptr(), 3) }, VaStatus::BufferTooSmall);
    let v = unsafe { CStr::from_ptr(va_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}
