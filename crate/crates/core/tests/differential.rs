use dynca::difftest::{generate_cases, run_cases, DiffOptions};
use dynca::generator::GenConfig;

#[test]
fn generated_programs_agree() {
    let cases = generate_cases(100, 2024, &GenConfig::default());
    let summary = run_cases(&cases, &DiffOptions::default());
    let failing: Vec<_> = summary
        .results
        .iter()
        .filter(|r| r.verdict != dynca::difftest::Verdict::Agree)
        .collect();
    for r in failing.iter().take(3) {
        eprintln!("{:?}\n{}", r.verdict, r.replay);
    }
    eprintln!("{summary}");
    assert!(summary.all_agree(), "{}", summary);
}
