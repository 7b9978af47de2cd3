//! Round trips of every on-disk format.

use std::fs;
use std::path::Path;

use proptest::prelude::*;
use surrogate::checkpoint::Checkpoint;
use surrogate::dataset_io::{load_dataset, save_dataset, write_dataset_files};
use surrogate::provenance::Provenance;
use surrogate::report::write_report;
use surrogate::tables::{read_protocol, read_sweep_csv, sweep_csv, write_protocol};
use surrogate_core::adapt::{finetune, FineTuneConfig, Modality, Selector, Validation};
use surrogate_core::data::{gen_synthetic_benchmark, Dataset, Dims, Domain, MultiModalSample, NormStats};
use surrogate_core::eval::{leave_k_out_protocol, ProtocolConfig};
use surrogate_core::hpograph::HyperParamGrid;
use surrogate_core::model::{ModelConfig, SurrogateModel};
use surrogate_core::runner::Sequential;

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    v.sort();
    v
}

fn benchmark() -> (Dataset, Dataset) {
    gen_synthetic_benchmark(5, 48, 6, 0.6, Dims::benchmark(8)).unwrap()
}

#[test]
fn datasets_round_trip_byte_exact() {
    let tmp = tempfile::tempdir().unwrap();
    let (source, _) = benchmark();
    save_dataset(&tmp.path().join("a"), &source, "{}\n").unwrap();
    let back = load_dataset(&tmp.path().join("a")).unwrap();
    assert_eq!(back, source);
    save_dataset(&tmp.path().join("b"), &back, "{}\n").unwrap();
    assert_eq!(files(&tmp.path().join("a")), files(&tmp.path().join("b")));
}

#[test]
fn adapted_checkpoints_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let (source, target) = benchmark();
    let model = SurrogateModel::init(ModelConfig::tiny(9, 10, 8), 5).unwrap();
    let cfg = FineTuneConfig {
        selector: Selector::DecoderBlockLast,
        epochs: 3,
        bias_correct: true,
        var_correct: true,
        ..Default::default()
    };
    let mut adapted = finetune(&model, &target.prepare().unwrap(), &cfg).unwrap();
    adapted.model.round_to_f32();
    let ck = Checkpoint::adapted(adapted.clone(), source.norm.clone(), Provenance::new("adapt", &cfg, 5));
    ck.save(&tmp.path().join("a")).unwrap();
    let back = Checkpoint::load(&tmp.path().join("a")).unwrap();
    assert_eq!(back.as_adapted(), Some(adapted));
    back.save(&tmp.path().join("b")).unwrap();
    assert_eq!(files(&tmp.path().join("a")), files(&tmp.path().join("b")));
    // saving replaces an earlier checkpoint but never a foreign directory
    ck.save(&tmp.path().join("a")).unwrap();
    fs::create_dir(tmp.path().join("c")).unwrap();
    fs::write(tmp.path().join("c/notes.txt"), "keep").unwrap();
    assert!(ck.save(&tmp.path().join("c")).is_err());
}

#[test]
fn protocol_and_report_regenerate_identically() {
    let tmp = tempfile::tempdir().unwrap();
    let (source, target) = benchmark();
    let model = SurrogateModel::init(ModelConfig::tiny(9, 10, 8), 6).unwrap();
    let grid = HyperParamGrid::desk(FineTuneConfig::default(), [1e-3, 1e-2, 1e-1], [1, 2, 4]);
    let pc = ProtocolConfig {
        k_leave: 1,
        k_select: vec![1, 2],
        modalities: vec![Modality::Scalars, Modality::Image],
        cka: true,
    };
    let p = leave_k_out_protocol(&model, &target.prepare().unwrap(), &grid, &pc, &Sequential).unwrap();
    let dirs: Vec<_> = ["eval", "r1", "r2"].iter().map(|n| tmp.path().join(n)).collect();
    dirs.iter().for_each(|d| fs::create_dir(d).unwrap());
    write_protocol(&dirs[0], &p, Some(&source.norm)).unwrap();
    let stored = read_protocol(&dirs[0]).unwrap();
    assert_eq!(stored.protocol, p);
    assert_eq!(stored.norm.as_ref(), Some(&source.norm));
    let a = write_report(&dirs[1], &p, Some(&source.norm)).unwrap();
    let b = write_report(&dirs[2], &stored.protocol, stored.norm.as_ref()).unwrap();
    assert_eq!(a, b);
    assert_eq!(files(&dirs[1]), files(&dirs[2]));
}

fn dataset(n: usize, d_in: usize, d_out: usize, side: usize, values: Vec<f32>) -> Dataset {
    let mut it = values.into_iter().cycle();
    let mut next = || it.next().unwrap();
    let samples: Vec<MultiModalSample> = (0..n)
        .map(|_| MultiModalSample {
            x: (0..d_in).map(|_| next()).collect(),
            o: (0..d_out).map(|_| next()).collect(),
            img: (0..side * side).map(|_| next()).collect(),
        })
        .collect();
    let norm = NormStats::fit(&samples).unwrap();
    Dataset {
        dims: Dims { d_in, d_out, img_h: side, img_w: side },
        domain: Domain::Target,
        norm,
        seed: n as u64,
        samples,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn arbitrary_finite_datasets_round_trip(n in 1usize..6, d_in in 1usize..4, d_out in 1usize..4, side in 1usize..4,
                                            values in prop::collection::vec(-1e12f32..1e12, 1..40)) {
        let tmp = tempfile::tempdir().unwrap();
        let ds = dataset(n, d_in, d_out, side, values);
        write_dataset_files(tmp.path(), &ds).unwrap();
        prop_assert_eq!(load_dataset(tmp.path()).unwrap(), ds);
    }

    #[test]
    fn sweep_tables_keep_every_float(v in prop::collection::vec(prop_oneof![any::<f64>().prop_filter("not NaN", |x| !x.is_nan()), Just(f64::INFINITY)], 27),
                                     folds in prop::collection::vec(-1e6f64..1e6, 0..5)) {
        let tmp = tempfile::tempdir().unwrap();
        let grid = HyperParamGrid::desk(FineTuneConfig::default(), [1e-3, 1e-2, 1e-1], [1, 2, 4]);
        let sweep: Vec<Validation> = v.iter().map(|&v| Validation { v, fold_errors: folds.clone() }).collect();
        let path = tmp.path().join("sweep.csv");
        fs::write(&path, sweep_csv(&grid, &sweep)).unwrap();
        prop_assert_eq!(read_sweep_csv(&path, &grid).unwrap(), sweep);
    }
}
