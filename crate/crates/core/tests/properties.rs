use dmscope::histogram::{BinningConfig, PerformanceHistogram};
use dmscope::imageio::{normalize, LabelMap, RawImage, IGNORE_LABEL};
use dmscope::metrics::{psnr, ConfusionAccumulator, PsnrConfig};
use dmscope::observer::{build_reference, evaluate_batch, sliding_window_observe, Clock, DmReport, ObserverConfig};
use dmscope::reconstruction::{score_corpus, Reconstructor};
use dmscope::synthcorpus::{generate_corpus, CorpusKind, CorpusSpec};
use dmscope::transport::{dm_metric, dm_metric_with, emd_1d, emd_lp, DmOptions, TransportMode};
use proptest::prelude::*;

fn raw_image() -> impl Strategy<Value = RawImage> {
    (1usize..12, 1usize..12).prop_flat_map(|(h, w)| {
        prop::collection::vec(any::<u8>(), h * w * 3).prop_map(move |d| RawImage::new(h, w, d).unwrap())
    })
}

fn image_pair() -> impl Strategy<Value = (RawImage, RawImage)> {
    (1usize..10, 1usize..10).prop_flat_map(|(h, w)| {
        let img =
            move || prop::collection::vec(any::<u8>(), h * w * 3).prop_map(move |d| RawImage::new(h, w, d).unwrap());
        (img(), img())
    })
}

fn label_pairs(classes: u8) -> impl Strategy<Value = Vec<(LabelMap, LabelMap)>> {
    let cell = prop_oneof![9 => 0..classes, 1 => Just(IGNORE_LABEL)];
    let pair = prop::collection::vec((cell.clone(), 0..classes), 16).prop_map(move |v| {
        let (g, p): (Vec<u8>, Vec<u8>) = v.into_iter().unzip();
        (
            LabelMap::new(4, 4, classes.into(), g).unwrap(),
            LabelMap::new(4, 4, classes.into(), p).unwrap(),
        )
    });
    prop::collection::vec(pair, 1..6)
}

fn masses(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(prop_oneof![1 => Just(0.0), 3 => 0.01f64..1.0], len).prop_map(|mut v| {
        if v.iter().all(|&x| x == 0.0) {
            v[0] = 1.0;
        }
        let t: f64 = v.iter().sum();
        v.iter().map(|x| x / t).collect()
    })
}

fn counts_hist(binning: BinningConfig) -> impl Strategy<Value = PerformanceHistogram> {
    prop::collection::vec(0u64..20, binning.bin_count()).prop_map(move |mut c| {
        if c.iter().all(|&x| x == 0) {
            c[0] = 1;
        }
        let t = c.iter().sum();
        PerformanceHistogram::from_counts(binning, c, t).unwrap()
    })
}

fn small_binning() -> BinningConfig {
    BinningConfig::new(0.0, 12.0, 0.5).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn reconstruct_is_deterministic_and_shape_preserving(raw in raw_image(), seed in any::<u64>()) {
        let img = normalize(&raw);
        for r in [
            Reconstructor::Identity,
            Reconstructor::quantize(8).unwrap(),
            Reconstructor::blur_resample(4).unwrap(),
            Reconstructor::pseudo_noise(0.3, seed).unwrap(),
        ] {
            let out = r.reconstruct(&img);
            prop_assert!(out.same_shape(&img));
            let again = r.reconstruct(&img);
            prop_assert_eq!(out.data(), again.data());
        }
    }

    #[test]
    fn quantize_256_is_identity_on_8bit(raw in raw_image()) {
        let img = normalize(&raw);
        let q = Reconstructor::quantize(256).unwrap().reconstruct(&img);
        prop_assert_eq!(q.data(), img.data());
    }

    #[test]
    fn psnr_is_symmetric((a, b) in image_pair()) {
        let cfg = PsnrConfig::default();
        let (a, b) = (normalize(&a), normalize(&b));
        prop_assert_eq!(psnr(&a, &b, &cfg).unwrap(), psnr(&b, &a, &cfg).unwrap());
    }

    #[test]
    fn confusion_is_order_independent_and_conserves(pairs in label_pairs(4), rot in 0usize..6) {
        let mut fwd = ConfusionAccumulator::new(4);
        for (g, p) in &pairs {
            fwd.accumulate(g, p).unwrap();
        }
        let mut shuffled = pairs.clone();
        shuffled.reverse();
        let k = rot % shuffled.len();
        shuffled.rotate_left(k);
        let mut other = ConfusionAccumulator::new(4);
        for (g, p) in &shuffled {
            other.accumulate(g, p).unwrap();
        }
        prop_assert_eq!(&fwd, &other);

        for s in 0..4u8 {
            let gt_pixels = pairs.iter().flat_map(|(g, _)| g.data()).filter(|&&v| v == s).count() as u64;
            let i = usize::from(s);
            prop_assert_eq!(fwd.true_positives()[i] + fwd.false_negatives()[i], gt_pixels);
        }

        let perfect = (0..4).all(|i| fwd.false_positives()[i] == 0 && fwd.false_negatives()[i] == 0);
        if let Ok(m) = fwd.miou() {
            prop_assert_eq!(m == 1.0, perfect);
        }
    }

    #[test]
    fn lp_agrees_with_closed_form((p, q) in (2usize..40).prop_flat_map(|n| (masses(n), masses(n)))) {
        let lp = emd_lp(&p, &q, 0.5).unwrap();
        let cf = emd_1d(&p, &q, 0.5).unwrap();
        prop_assert!((lp.dm_db - cf.dm_db).abs() <= 1e-9);
        // normalized inputs move unit mass, so DM is the raw work times the width
        let flow = lp.flow.unwrap();
        prop_assert!((flow.total() - 1.0).abs() <= 1e-9);
        prop_assert!((flow.work() * 0.5 - lp.dm_db).abs() <= 1e-9);
    }

    #[test]
    fn unequal_totals_move_the_minimum(p in prop::collection::vec(0.0f64..3.0, 2..15), q in prop::collection::vec(0.0f64..3.0, 2..15)) {
        let (sp, sq): (f64, f64) = (p.iter().sum(), q.iter().sum());
        prop_assume!(sp > 0.01 && sq > 0.01);
        let flow = emd_lp(&p, &q, 1.0).unwrap().flow.unwrap();
        prop_assert!((flow.total() - sp.min(sq)).abs() <= 1e-9 * sp.max(sq));
        for (got, cap) in flow.row_sums().iter().zip(&p) {
            prop_assert!(*got <= cap + 1e-9);
        }
        for (got, cap) in flow.col_sums().iter().zip(&q) {
            prop_assert!(*got <= cap + 1e-9);
        }
    }

    #[test]
    fn dm_is_a_metric(a in counts_hist(small_binning()), b in counts_hist(small_binning()), c in counts_hist(small_binning())) {
        let d = |x: &PerformanceHistogram, y: &PerformanceHistogram| dm_metric(x, y).unwrap().dm_db;
        prop_assert!(d(&a, &b) >= 0.0);
        prop_assert_eq!(d(&a, &b), d(&b, &a));
        prop_assert_eq!(d(&a, &a), 0.0);
        let same_distribution = a.counts().iter().zip(b.counts()).all(|(x, y)| x * b.total() == y * a.total());
        prop_assert_eq!(d(&a, &b) == 0.0, same_distribution);
        prop_assert!(d(&a, &c) <= d(&a, &b) + d(&b, &c) + 1e-12);

        let lp = dm_metric_with(&a, &b, DmOptions { mode: TransportMode::Normalized, keep_flow: true }).unwrap();
        prop_assert!((lp.dm_db - d(&a, &b)).abs() <= 1e-9);
    }

    #[test]
    fn translation_is_exact(counts in prop::collection::vec(0u64..9, 1..10), j in 1usize..14) {
        let binning = small_binning();
        prop_assume!(counts.iter().any(|&c| c > 0));
        let place = |offset: usize| {
            let mut v = vec![0u64; binning.bin_count()];
            v[offset..offset + counts.len()].copy_from_slice(&counts);
            let t = v.iter().sum();
            PerformanceHistogram::from_counts(binning, v, t).unwrap()
        };
        prop_assert_eq!(dm_metric(&place(0), &place(j)).unwrap().dm_db, j as f64 * binning.width_db());
    }

    #[test]
    fn dm_grows_as_a_corpus_moves_away(
        reference in prop::collection::vec(30.0f64..40.0, 1..40),
        target in prop::collection::vec(15.0f64..28.0, 1..40),
        c in 0.5f64..4.0,
    ) {
        let binning = BinningConfig::default();
        let r = PerformanceHistogram::build(&reference, binning).unwrap();
        let a = PerformanceHistogram::build(&target, binning).unwrap();
        let moved: Vec<f64> = target.iter().map(|s| s - c).collect();
        let b = PerformanceHistogram::build(&moved, binning).unwrap();
        prop_assert!(dm_metric(&r, &b).unwrap().dm_db >= dm_metric(&r, &a).unwrap().dm_db);
    }
}

#[test]
fn blur_psnr_decreases_with_factor() {
    let cfg = PsnrConfig::default();
    for kind in [
        CorpusKind::Gradient,
        CorpusKind::Checker,
        CorpusKind::Noise,
        CorpusKind::Blotch,
    ] {
        let corpus = generate_corpus(&CorpusSpec::new(kind, 20, 48, 48, 12)).unwrap();
        let mean = |f| {
            let s = score_corpus(&Reconstructor::blur_resample(f).unwrap(), &corpus.images, &cfg).unwrap();
            s.iter().sum::<f64>() / s.len() as f64
        };
        let (m2, m4, m8) = (mean(2), mean(4), mean(8));
        assert!(m2 >= m4 && m4 >= m8, "{kind:?}: {m2} {m4} {m8}");
    }
}

fn observer_setup() -> (dmscope::DomainReference, Vec<dmscope::Image>, ObserverConfig) {
    let cfg = ObserverConfig {
        min_batch: 10,
        clock: Clock::epoch(),
        ..Default::default()
    };
    let train = generate_corpus(&CorpusSpec::new(CorpusKind::Gradient, 40, 32, 32, 1))
        .unwrap()
        .images;
    let reference = build_reference(
        &train,
        Reconstructor::quantize(8).unwrap(),
        BinningConfig::default(),
        "train",
        &cfg,
    )
    .unwrap();
    (reference, train, cfg)
}

#[test]
fn observer_invariants() {
    let (reference, train, cfg) = observer_setup();
    // own training corpus
    assert_eq!(evaluate_batch(&reference, &train, &cfg).unwrap().dm_db, 0.0);

    let val = generate_corpus(&CorpusSpec::new(CorpusKind::Gradient, 30, 32, 32, 2))
        .unwrap()
        .images;
    let once = reference.calibrate(&val, &cfg).unwrap();
    let twice = once.calibrate(&val, &cfg).unwrap();
    assert_eq!(once.threshold_db(), twice.threshold_db());

    let stream = generate_corpus(&CorpusSpec::new(CorpusKind::Noise, 30, 32, 32, 3))
        .unwrap()
        .images;
    let a = evaluate_batch(&once, &stream, &cfg).unwrap();
    let b = evaluate_batch(&once, &stream, &cfg).unwrap();
    assert_eq!(serde_json::to_vec(&a).unwrap(), serde_json::to_vec(&b).unwrap());

    let windows = sliding_window_observe(&once, &stream, 10, 10, &cfg).unwrap();
    assert_eq!(windows.len(), 3);
    for (i, w) in windows.iter().enumerate() {
        let direct = evaluate_batch(&once, &stream[10 * i..10 * (i + 1)], &cfg).unwrap();
        assert_eq!(
            DmReport {
                window_index: None,
                ..w.clone()
            },
            direct
        );
        w.verify_against(&once).unwrap();
    }
}
