use std::ffi::{CStr, CString};
use std::io::Cursor;
use std::ptr;

use pwi_bench_ffi::*;

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn last_error() -> String {
    let p = pwi_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn version_matches_crate() {
    let v = unsafe { CStr::from_ptr(pwi_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn jaro_winkler_reference_pairs() {
    let mut out = 0.0;
    let s = unsafe { pwi_jaro_winkler(c("MARTHA").as_ptr(), c("MARHTA").as_ptr(), &mut out) };
    assert_eq!(s, PwiStatus::Ok);
    assert!((out - 0.961_111_111).abs() < 1e-6, "{out}");

    let s = unsafe { pwi_jaro_winkler(c("dog").as_ptr(), c("dog").as_ptr(), &mut out) };
    assert_eq!(s, PwiStatus::Ok);
    assert_eq!(out, 1.0);
}

#[test]
fn null_and_bad_utf8_are_reported() {
    let mut out = 0.0;
    let s = unsafe { pwi_jaro_winkler(ptr::null(), c("x").as_ptr(), &mut out) };
    assert_eq!(s, PwiStatus::NullPointer);
    assert!(last_error().contains("a is null"));

    let bad = [0xffu8, 0xfe, 0];
    let s = unsafe { pwi_jaro_winkler(c("x").as_ptr(), bad.as_ptr().cast(), &mut out) };
    assert_eq!(s, PwiStatus::InvalidUtf8);
}

#[test]
fn classify_picks_nearest_label() {
    let image = [1.0, 0.0, 0.0];
    let labels = [0.0, 1.0, 0.0, 0.9, 0.1, 0.0, 0.0, 0.0, 1.0];
    let mut probs = [0.0; 3];
    let mut idx = usize::MAX;
    let s = unsafe { pwi_classify(image.as_ptr(), 3, labels.as_ptr(), 3, 100.0, probs.as_mut_ptr(), &mut idx) };
    assert_eq!(s, PwiStatus::Ok);
    assert_eq!(idx, 1);
    assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    // softmax oracle
    let cos1 = 0.9 / (0.81f64 + 0.01).sqrt();
    let z = [0.0, 100.0 * cos1, 0.0];
    let m = z[1];
    let denom: f64 = z.iter().map(|v| (v - m).exp()).sum();
    assert!((probs[1] - 1.0 / denom).abs() < 1e-12);
}

#[test]
fn rdm_handle_lifecycle() {
    // two tight pairs
    let data = [1.0, 0.0, 0.99, 0.1, 0.0, 1.0, 0.1, 0.99];
    let mut rdm = ptr::null_mut();
    unsafe {
        assert_eq!(pwi_rdm_from_embeddings(data.as_ptr(), 4, 2, &mut rdm), PwiStatus::Ok);
        assert_eq!(pwi_rdm_size(rdm), 4);
        let mut v = -1.0;
        assert_eq!(pwi_rdm_get(rdm, 0, 0, &mut v), PwiStatus::Ok);
        assert_eq!(v, 0.0);
        assert_eq!(pwi_rdm_get(rdm, 0, 2, &mut v), PwiStatus::Ok);
        assert!((v - 1.0).abs() < 1e-12);
        assert_eq!(pwi_rdm_get(rdm, 4, 0, &mut v), PwiStatus::InvalidArgument);

        let mut ci = 0.0;
        assert_eq!(pwi_rdm_cluster_index(rdm, &mut ci), PwiStatus::InvalidArgument);
        assert_eq!(pwi_rdm_set_categories(rdm, [0u32, 0].as_ptr(), 2), PwiStatus::InvalidArgument);
        assert_eq!(pwi_rdm_set_categories(rdm, [0u32, 0, 1, 1].as_ptr(), 4), PwiStatus::Ok);
        assert_eq!(pwi_rdm_cluster_index(rdm, &mut ci), PwiStatus::Ok);
        assert!(ci > 0.8, "{ci}");

        let mut m = 0.0;
        assert_eq!(pwi_rdm_mean_offdiag(rdm, &mut m), PwiStatus::Ok);
        assert!(m > 0.0 && m < 1.0);

        let mut rho = 0.0;
        assert_eq!(pwi_rdm_compare(rdm, rdm, &mut rho), PwiStatus::Ok);
        assert!((rho - 1.0).abs() < 1e-12);
        pwi_rdm_free(rdm);
        pwi_rdm_free(ptr::null_mut());
    }
    assert_eq!(unsafe { pwi_rdm_size(ptr::null()) }, 0);
}

#[test]
fn word_vectors_from_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("vec.txt");
    std::fs::write(&path, "dog 1 0\ncat 0.6 0.8\n").unwrap();
    let mut store = ptr::null_mut();
    unsafe {
        assert_eq!(pwi_word_vectors_load(c(path.to_str().unwrap()).as_ptr(), &mut store), PwiStatus::Ok);
        let (mut v, mut found) = (0.0, false);
        assert_eq!(
            pwi_semantic_similarity(store, c("dog").as_ptr(), c("cat").as_ptr(), &mut v, &mut found),
            PwiStatus::Ok
        );
        assert!(found);
        assert!((v - 0.6).abs() < 1e-12);
        assert_eq!(
            pwi_semantic_similarity(store, c("dog").as_ptr(), c("zebra").as_ptr(), &mut v, &mut found),
            PwiStatus::Ok
        );
        assert!(!found);
        pwi_word_vectors_free(store);

        let missing = dir.path().join("absent.txt");
        assert_eq!(pwi_word_vectors_load(c(missing.to_str().unwrap()).as_ptr(), &mut store), PwiStatus::Io);
    }
}

#[test]
fn synthetic_provider_embeddings() {
    let words = [c("dog"), c("cat"), c("animal")];
    let ptrs: Vec<_> = words.iter().map(|w| w.as_ptr()).collect();
    let mut p = ptr::null_mut();
    unsafe {
        assert_eq!(pwi_synthetic_new(ptrs.as_ptr(), ptrs.len(), 3, 1.0, &mut p), PwiStatus::Ok);
        let dim = pwi_synthetic_dim(p);
        assert!(dim > 0);
        let mut text = vec![0.0; dim];
        let mut img = vec![0.0; dim];
        assert_eq!(pwi_synthetic_embed_text(p, c("a photo of a dog").as_ptr(), text.as_mut_ptr(), dim), PwiStatus::Ok);
        // full bias: the image is the word's vector
        assert_eq!(
            pwi_synthetic_embed_image(p, c("cat").as_ptr(), c("dog").as_ptr(), img.as_mut_ptr(), dim),
            PwiStatus::Ok
        );
        for (a, b) in text.iter().zip(&img) {
            assert!((a - b).abs() < 1e-12);
        }
        let norm: f64 = img.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-12);

        assert_eq!(
            pwi_synthetic_embed_image(p, c("cat").as_ptr(), ptr::null(), img.as_mut_ptr(), dim),
            PwiStatus::Ok
        );
        assert_eq!(
            pwi_synthetic_embed_text(p, c("dog").as_ptr(), text.as_mut_ptr(), dim - 1),
            PwiStatus::InvalidArgument
        );
        pwi_synthetic_free(p);

        assert_eq!(pwi_synthetic_new(ptrs.as_ptr(), ptrs.len(), 3, 1.5, &mut p), PwiStatus::Provider);
        assert!(!last_error().is_empty());
    }
}

#[test]
fn render_round_trip() {
    let img = image::RgbImage::from_pixel(80, 60, image::Rgb([200, 180, 40]));
    let mut png = Vec::new();
    img.write_to(&mut Cursor::new(&mut png), image::ImageFormat::Png).unwrap();

    let (mut data, mut len) = (ptr::null_mut(), 0usize);
    unsafe {
        assert_eq!(pwi_render_png(png.as_ptr(), png.len(), c("dog").as_ptr(), &mut data, &mut len), PwiStatus::Ok);
        let out = std::slice::from_raw_parts(data, len).to_vec();
        pwi_bytes_free(data, len);
        let decoded = image::load_from_memory(&out).unwrap();
        assert!(decoded.width() > 0 && decoded.height() > 0);
        assert_ne!(decoded.to_rgb8().as_raw(), img.as_raw());

        let junk = [1u8, 2, 3];
        assert_eq!(pwi_render_png(junk.as_ptr(), 3, c("dog").as_ptr(), &mut data, &mut len), PwiStatus::Render);

        // no word: the control image passes through untouched
        assert_eq!(pwi_render_png(junk.as_ptr(), 3, ptr::null(), &mut data, &mut len), PwiStatus::Ok);
        assert_eq!(std::slice::from_raw_parts(data, len), &junk);
        pwi_bytes_free(data, len);
    }
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/pwi_bench.h")).unwrap();
    let src = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/src/lib.rs")).unwrap();
    let exports: Vec<&str> = src
        .lines()
        .filter_map(|l| l.split("extern \"C\" fn ").nth(1))
        .map(|rest| rest.split('(').next().unwrap())
        .collect();
    assert!(exports.len() > 20);
    for name in exports {
        assert!(header.contains(&format!("{name}(")), "{name} missing from header");
    }
    for t in ["typedef struct PwiRdm PwiRdm;", "PWI_STATUS_OK = 0", "PWI_STATUS_PANIC"] {
        assert!(header.contains(t), "{t}");
    }
}

#[test]
fn header_compiles_as_c() {
    let Ok(cc) = which_cc() else { return };
    let dir = tempfile::tempdir().unwrap();
    let main = dir.path().join("main.c");
    std::fs::write(&main, "#include \"pwi_bench.h\"\nint main(void) { return pwi_version() == 0; }\n").unwrap();
    let out = std::process::Command::new(cc)
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(concat!(env!("CARGO_MANIFEST_DIR"), "/include"))
        .arg(&main)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

fn which_cc() -> Result<&'static str, ()> {
    ["cc", "gcc", "clang"]
        .into_iter()
        .find(|c| std::process::Command::new(c).arg("--version").output().is_ok())
        .ok_or(())
}
