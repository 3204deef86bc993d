use std::fs;
use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::Path;
use std::process::{Child, Command, Output, Stdio};
use std::time::{Duration, Instant};

use scribseg::harness::{write_phantom_dataset, EvalReport, PhantomSpec};
use scribseg::{
    dice_sweep, l1_normalize, mask_to_scribbles, normalize_map, pca_features, read_channel_stack,
    read_mask_pgm, read_scribbles, rgb_reconstruct, skeletonize, threshold_segment,
    write_channel_stack, write_mask_pgm, write_scribbles, BandWeights, BinaryMask, ChannelStack,
    DiceCurve, DistanceMap, ScribbleSet,
};

fn scribseg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_scribseg"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = scribseg(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(args: &[&str]) -> i32 {
    scribseg(args).status.code().unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn read_map(path: &Path) -> Vec<f32> {
    read_channel_stack(path).unwrap().into_data()
}

struct LineExample {
    _dir: tempfile::TempDir,
    stack: std::path::PathBuf,
    seeds: std::path::PathBuf,
    out: std::path::PathBuf,
}

fn line_example() -> LineExample {
    let dir = tempfile::tempdir().unwrap();
    let stack = dir.path().join("line.cst");
    let seeds = dir.path().join("seeds.json");
    write_channel_stack(
        &ChannelStack::new(1, 3, 1, vec![0.0, 1.0, 3.0]).unwrap(),
        &stack,
    )
    .unwrap();
    write_scribbles(&ScribbleSet::foreground(&[(0, 0)], 1, 3).unwrap(), &seeds).unwrap();
    LineExample {
        out: dir.path().join("map.cst"),
        _dir: dir,
        stack,
        seeds,
    }
}

#[test]
fn usage_errors_exit_1() {
    let out = scribseg(&[]);
    assert_eq!(out.status.code(), Some(1));
    assert!(out.stdout.is_empty());
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    assert_eq!(code(&["--help"]), 0);
    assert_eq!(code(&["frobnicate"]), 1);
    assert_eq!(
        code(&[
            "geodesic",
            "a.cst",
            "--scribbles",
            "s.json",
            "out.cst",
            "--bogus"
        ]),
        1
    );
    assert_eq!(
        code(&[
            "euclid",
            "--scribbles",
            "s.json",
            "--size",
            "3by4",
            "out.cst"
        ]),
        1
    );
    assert_eq!(
        code(&[
            "geodesic",
            "a",
            "--scribbles",
            "s",
            "o",
            "--connectivity",
            "6"
        ]),
        1
    );
    assert_eq!(code(&["features", "in.cst", "out.cst"]), 1);
}

#[test]
fn data_errors_exit_2() {
    let ex = line_example();
    let dir = ex.out.parent().unwrap();
    assert_eq!(
        code(&["normalize", p(&dir.join("missing.cst")), p(&ex.out)]),
        2
    );

    let garbage = dir.join("garbage.cst");
    fs::write(&garbage, b"this is not a channel stack").unwrap();
    let out = scribseg(&["normalize", p(&garbage), p(&ex.out)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("magic"));
    assert!(out.stdout.is_empty());

    let far = dir.join("far.json");
    fs::write(&far, r#"[{"x":3,"y":0,"label":1}]"#).unwrap();
    assert_eq!(
        code(&["geodesic", p(&ex.stack), "--scribbles", p(&far), p(&ex.out)]),
        2
    );
    assert_eq!(code(&["features", "--k", "2", p(&ex.stack), p(&ex.out)]), 2);
    assert!(!ex.out.exists());
}

#[test]
fn geodesic_line_example() {
    let ex = line_example();
    let stdout = ok(&[
        "geodesic",
        p(&ex.stack),
        "--scribbles",
        p(&ex.seeds),
        p(&ex.out),
    ]);
    assert_eq!(stdout.trim(), p(&ex.out));
    assert_eq!(read_map(&ex.out), [0.0, 1.0, 3.0]);

    ok(&[
        "geodesic",
        p(&ex.stack),
        "--scribbles",
        p(&ex.seeds),
        "--exact",
        p(&ex.out),
    ]);
    assert_eq!(read_map(&ex.out), [0.0, 1.0, 3.0]);

    ok(&[
        "geodesic",
        p(&ex.stack),
        "--scribbles",
        p(&ex.seeds),
        "--lambda",
        "0",
        "--iters",
        "1",
        p(&ex.out),
    ]);
    assert_eq!(read_map(&ex.out), [0.0, 1.0, 2.0]);
}

#[test]
fn euclid_writes_edt() {
    let ex = line_example();
    let seeds = ex.out.with_file_name("corner.json");
    write_scribbles(&ScribbleSet::foreground(&[(0, 0)], 4, 5).unwrap(), &seeds).unwrap();
    ok(&[
        "euclid",
        "--scribbles",
        p(&seeds),
        "--size",
        "4x5",
        p(&ex.out),
    ]);
    let map = read_channel_stack(&ex.out).unwrap();
    assert_eq!(map.dims(), (4, 5));
    assert_eq!(map.pixel(4, 3), [5.0]);
    assert_eq!(map.pixel(3, 0), [3.0]);
}

#[test]
fn preprocessing_commands_match_library() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("cube.cst");
    let out = dir.path().join("out.cst");
    let stack = ChannelStack::from_fn(6, 5, 7, |x, y, c| {
        ((x * 3 + y * 5 + c * 7) % 11) as f32 + 0.5
    })
    .unwrap();
    write_channel_stack(&stack, &input).unwrap();

    ok(&["normalize", p(&input), p(&out)]);
    assert_eq!(read_channel_stack(&out).unwrap(), l1_normalize(&stack));

    ok(&["features", "--k", "3", p(&input), p(&out)]);
    assert_eq!(
        read_channel_stack(&out).unwrap(),
        pca_features(&stack, 3).unwrap()
    );

    ok(&["rgb", p(&input), p(&out)]);
    assert_eq!(
        read_channel_stack(&out).unwrap(),
        rgb_reconstruct(&stack, &BandWeights::band_thirds(7)).unwrap()
    );

    let weights = dir.path().join("w.json");
    fs::write(
        &weights,
        r#"{"r":[0,0,0,0,0,0,1],"g":[0,0,0,0.5,0.5,0,0],"b":[1,0,0,0,0,0,0]}"#,
    )
    .unwrap();
    ok(&["rgb", p(&input), "--weights", p(&weights), p(&out)]);
    let rgb = read_channel_stack(&out).unwrap();
    assert_eq!(
        rgb.pixel(2, 3),
        [
            stack.pixel(2, 3)[6],
            (stack.pixel(2, 3)[3] + stack.pixel(2, 3)[4]) / 2.0,
            stack.pixel(2, 3)[0]
        ]
    );

    fs::write(&weights, r#"{"r":[1],"g":[1],"b":[1]}"#).unwrap();
    assert_eq!(
        code(&["rgb", p(&input), "--weights", p(&weights), p(&out)]),
        2
    );
}

#[test]
fn sweep_and_skeletonize_match_library() {
    let dir = tempfile::tempdir().unwrap();
    let gt = BinaryMask::from_fn(20, 24, |x, y| {
        (x as i32 - 12).pow(2) + (y as i32 - 10).pow(2) <= 30
    })
    .unwrap();
    let gt_path = dir.path().join("gt.pgm");
    write_mask_pgm(&gt, &gt_path).unwrap();

    let scribbles_path = dir.path().join("scribbles.json");
    ok(&["skeletonize", p(&gt_path), p(&scribbles_path)]);
    let scribbles = read_scribbles(&scribbles_path, 20, 24).unwrap();
    assert_eq!(scribbles, mask_to_scribbles(&skeletonize(&gt)).unwrap());

    let raw = DistanceMap::new(
        20,
        24,
        (0..480).map(|i| ((i * 37) % 101) as f32 * 0.3).collect(),
        false,
    )
    .unwrap();
    let map_path = dir.path().join("map.cst");
    write_channel_stack(&raw.to_stack(), &map_path).unwrap();
    let curve_path = dir.path().join("curve.csv");
    let stdout = ok(&[
        "sweep",
        p(&map_path),
        "--gt",
        p(&gt_path),
        "--steps",
        "64",
        p(&curve_path),
    ]);

    let expected = dice_sweep(&normalize_map(&raw), &gt, 64).unwrap();
    assert_eq!(fs::read_to_string(&curve_path).unwrap(), expected.to_csv());
    assert_eq!(DiceCurve::read(&curve_path).unwrap(), expected);
    assert_eq!(
        fs::read_to_string(curve_path.with_extension("json")).unwrap(),
        expected.summary_json()
    );
    assert_eq!(stdout.trim(), expected.summary_json().trim());

    let empty = dir.path().join("empty.pgm");
    write_mask_pgm(&BinaryMask::empty(4, 4).unwrap(), &empty).unwrap();
    assert_eq!(code(&["skeletonize", p(&empty), p(&scribbles_path)]), 2);
}

#[test]
fn phantom_then_eval() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let listed = ok(&[
        "phantom",
        "--out",
        p(&data),
        "--count",
        "3",
        "--noise",
        "0.3",
        "--seed",
        "11",
        "--size",
        "40x48",
        "--channels",
        "6",
    ]);
    assert_eq!(listed.lines().count(), 3);
    let stack = read_channel_stack(data.join("phantom_002.cst")).unwrap();
    assert_eq!(stack.dims(), (40, 48));
    assert_eq!(stack.channels(), 6);

    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let aggregate = ok(&["eval", p(&data), p(&a), "--no-timing"]);
    ok(&["eval", p(&data), p(&b), "--no-timing"]);
    assert_eq!(
        aggregate,
        fs::read_to_string(a.join("aggregate.csv")).unwrap()
    );
    let report = fs::read_to_string(a.join("report.csv")).unwrap();
    assert_eq!(report, fs::read_to_string(b.join("report.csv")).unwrap());
    let rows = EvalReport::rows_from_csv(&report).unwrap();
    assert_eq!(rows.len(), 12);
    assert!(rows.iter().all(|r| r.runtime_ms == 0.0));

    let timed = dir.path().join("timed");
    ok(&[
        "eval",
        p(&data),
        p(&timed),
        "--steps",
        "32",
        "--lambda",
        "0.5",
    ]);
    assert_eq!(
        EvalReport::rows_from_csv(&fs::read_to_string(timed.join("report.csv")).unwrap())
            .unwrap()
            .len(),
        12
    );
    assert_eq!(
        code(&["eval", p(&dir.path().join("nowhere")), p(&timed)]),
        2
    );
}

struct Server(Child);

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

struct HttpReply {
    status: u16,
    headers: String,
    body: Vec<u8>,
}

fn http(port: u16, method: &str, path: &str, body: &[u8]) -> std::io::Result<HttpReply> {
    let mut stream = TcpStream::connect(("127.0.0.1", port))?;
    stream.set_read_timeout(Some(Duration::from_secs(30)))?;
    write!(
        stream,
        "{method} {path} HTTP/1.1\r\nHost: localhost\r\nContent-Length: {}\r\nConnection: close\r\n\r\n",
        body.len()
    )?;
    stream.write_all(body)?;
    let mut raw = Vec::new();
    stream.read_to_end(&mut raw)?;
    let split = raw
        .windows(4)
        .position(|w| w == b"\r\n\r\n")
        .expect("header terminator");
    let headers = String::from_utf8_lossy(&raw[..split]).to_string();
    let status = headers.split(' ').nth(1).unwrap().parse().unwrap();
    Ok(HttpReply {
        status,
        headers,
        body: raw[split + 4..].to_vec(),
    })
}

#[test]
fn serve_matches_cli_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let spec = PhantomSpec {
        height: 32,
        width: 36,
        channels: 5,
        noise_sigma: 0.2,
    };
    write_phantom_dataset(&data, 2, &spec, 3).unwrap();

    let port = TcpListener::bind("127.0.0.1:0")
        .unwrap()
        .local_addr()
        .unwrap()
        .port();
    let _server = Server(
        Command::new(env!("CARGO_BIN_EXE_scribseg"))
            .args(["serve", "--port", &port.to_string(), "--data", p(&data)])
            .env("RUST_LOG", "warn")
            .stdout(Stdio::null())
            .stderr(Stdio::null())
            .spawn()
            .unwrap(),
    );
    let started = Instant::now();
    loop {
        match http(port, "GET", "/healthz", b"") {
            Ok(reply) if reply.status == 200 => break,
            _ if started.elapsed() < Duration::from_secs(20) => {
                std::thread::sleep(Duration::from_millis(50))
            }
            _ => panic!("service did not come up"),
        }
    }

    // preloaded under the image id, ground truth included
    let seeds_path = dir.path().join("seeds.json");
    ok(&[
        "skeletonize",
        p(&data.join("phantom_001.gt.pgm")),
        p(&seeds_path),
    ]);
    let seeds = fs::read(&seeds_path).unwrap();
    assert_eq!(
        http(port, "PUT", "/sessions/phantom_001/scribbles", &seeds)
            .unwrap()
            .status,
        204
    );
    let reply = http(
        port,
        "POST",
        "/sessions/phantom_001/distance?method=hyperspectral&lambda=0.7",
        b"",
    )
    .unwrap();
    assert_eq!(reply.status, 200);
    let meta: serde_json::Value = serde_json::from_slice(&reply.body).unwrap();

    let map_path = dir.path().join("map.cst");
    ok(&[
        "geodesic",
        p(&data.join("phantom_001.cst")),
        "--scribbles",
        p(&seeds_path),
        "--lambda",
        "0.7",
        p(&map_path),
    ]);
    let served = http(
        port,
        "GET",
        "/sessions/phantom_001/distance?method=hyperspectral",
        b"",
    )
    .unwrap();
    assert_eq!(served.body, fs::read(&map_path).unwrap());
    let cli_map = DistanceMap::from_stack(&read_channel_stack(&map_path).unwrap()).unwrap();
    assert_eq!(meta["max_raw"].as_f64(), Some(cli_map.min_max().1 as f64));

    let curve_path = dir.path().join("curve.csv");
    ok(&[
        "sweep",
        p(&map_path),
        "--gt",
        p(&data.join("phantom_001.gt.pgm")),
        p(&curve_path),
    ]);
    let curve = http(
        port,
        "GET",
        "/sessions/phantom_001/dice-curve?method=hyperspectral&format=csv",
        b"",
    )
    .unwrap();
    assert_eq!(curve.body, fs::read(&curve_path).unwrap());

    let seg = http(
        port,
        "GET",
        "/sessions/phantom_001/segmentation?method=hyperspectral&t=0.25",
        b"",
    )
    .unwrap();
    let expected = threshold_segment(&normalize_map(&cli_map), 0.25).unwrap();
    assert_eq!(seg.body, expected.to_pgm_bytes());
    let gt = read_mask_pgm(data.join("phantom_001.gt.pgm")).unwrap();
    let dice_line = seg
        .headers
        .lines()
        .find(|l| l.to_ascii_lowercase().starts_with("x-dice:"))
        .unwrap();
    let served_dice: f64 = dice_line.split(':').nth(1).unwrap().trim().parse().unwrap();
    assert_eq!(served_dice, scribseg::dice(&expected, &gt).unwrap());

    assert_eq!(
        http(port, "GET", "/sessions/phantom_000/preview", b"")
            .unwrap()
            .status,
        200
    );
    assert_eq!(
        http(port, "GET", "/sessions/phantom_002/preview", b"")
            .unwrap()
            .status,
        404
    );
}
