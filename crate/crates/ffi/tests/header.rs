use std::path::Path;
use std::process::Command;

/// The committed header parses as C and as C++, together with the example program.
#[test]
fn header_compiles() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR"));
    let example = dir.join("examples/greedy.c");
    for (compiler, lang) in [("cc", "c"), ("c++", "c++")] {
        let out = match Command::new(compiler)
            .args(["-fsyntax-only", "-Wall", "-Werror", "-x", lang])
            .arg(&example)
            .arg("-I")
            .arg(dir.join("include"))
            .output()
        {
            Ok(o) => o,
            Err(e) => {
                eprintln!("skipping {compiler}: {e}");
                continue;
            }
        };
        assert!(
            out.status.success(),
            "{compiler}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
}
