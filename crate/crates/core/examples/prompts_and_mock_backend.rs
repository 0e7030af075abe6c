//! Paraphrase prompts, the mock generator and the response cache.
//!
//! Run with `cargo run --example prompts_and_mock_backend`.

use auglab::corpus::{tokenize, Video};
use auglab::generative::mock::MockBackend;
use auglab::generative::{build_prompt, AugMode, Cache, Generator};

fn main() -> auglab::Result<()> {
    for mode in [AugMode::Tpvs, AugMode::Re] {
        println!(
            "{mode:?}: {}\n",
            build_prompt("a dog runs on the beach", mode)?
        );
    }

    let dir = tempfile::tempdir().map_err(|e| auglab::Error::io("tempdir", e))?;
    let cache = Cache::open(dir.path().join("cache"))?;
    let backend = MockBackend::new(dir.path().join("work"))?;
    let gen = Generator::new(&backend, &cache);

    let caption = tokenize("a dog runs on the beach")?;
    for mode in [AugMode::Tpvs, AugMode::Re] {
        for p in gen.request_paraphrases(&caption, 2, mode, 11)? {
            println!("{mode:?} paraphrase: {}", p.source());
        }
    }

    let video = Video::new("clip", vec![vec![0.6, 0.8, 0.0], vec![0.0, 0.6, 0.8]])?;
    let cartoon = gen.request_stylized_video(&video, AugMode::Tpvs, Some("cartoon"), 3)?;
    let relevant = gen.request_stylized_video(&video, AugMode::Re, None, 3)?;
    println!("cartoon frame 0: {:?}", cartoon.frame(0));
    println!("relevance frame 0: {:?}", relevant.frame(0));

    // Identical requests are served from the cache.
    let before = backend.calls();
    gen.request_paraphrases(&caption, 2, AugMode::Re, 11)?;
    gen.request_stylized_video(&video, AugMode::Tpvs, Some("cartoon"), 3)?;
    println!(
        "backend calls: {before} before replay, {} after",
        backend.calls()
    );
    Ok(())
}
