//! Benchmarks for the hot paths: structural parsing, cite extraction,
//! citation metrics, and caption matching.

use std::collections::BTreeSet;
use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};

use papereval_core::assets::caption_jaccard;
use papereval_core::citations::CitationReport;
use papereval_core::latex::{extract_cite_keys, parse_bib, LatexDocument};

/// Roughly 100 KB of realistic section soup with tables, figures, and cites.
fn synthetic_source() -> String {
    let mut out = String::from("\\documentclass{article}\n\\begin{document}\n");
    out.push_str("\\begin{abstract}\nA synthetic paper for benchmarking.\n\\end{abstract}\n");
    for i in 0..40 {
        out.push_str(&format!("\\section{{Section {i}}}\n"));
        for j in 0..8 {
            out.push_str(&format!(
                "Paragraph {j} with inline math $x_{{{j}}}$ and a citation~\\citep{{key{:02}, key{:02}}}. ",
                (i + j) % 30,
                (i * j) % 30
            ));
            out.push_str("Filler prose keeps the byte count realistic for parser work. ");
        }
        out.push('\n');
        if i % 4 == 0 {
            out.push_str(&format!(
                "\\begin{{figure}}\n\\includegraphics[width=\\linewidth]{{figs/plot_{i}.pdf}}\n\\caption{{Benchmark plot {i} with \\textbf{{bold}} text.}}\n\\label{{fig:f{i}}}\n\\end{{figure}}\n"
            ));
        }
        if i % 5 == 0 {
            out.push_str(&format!(
                "\\begin{{table}}\n\\caption{{Benchmark table {i}.}}\n\\label{{tab:t{i}}}\n\\begin{{tabular}}{{lrr}}\na & 1 & 2 \\\\\nb & 3 & 4 \\\\\n\\end{{tabular}}\n\\end{{table}}\n"
            ));
        }
        out.push_str("% a comment line with \\section{Ghost} inside\n");
    }
    out.push_str("\\end{document}\n");
    out
}

fn synthetic_bib(entries: usize) -> String {
    let mut out = String::new();
    for i in 0..entries {
        out.push_str(&format!(
            "@article{{key{i:02},\n  title = {{Title {{With}} Braces {i}}},\n  author = {{Author {i}}},\n  year = {{2025}},\n  abstract = {{An abstract sentence for entry {i}.}}\n}}\n\n"
        ));
    }
    out
}

fn bench_parse_document(c: &mut Criterion) {
    let source = synthetic_source();
    c.bench_function("parse_document_100kb", |b| {
        b.iter(|| LatexDocument::parse(black_box(&source)).unwrap())
    });
}

fn bench_extract_cite_keys(c: &mut Criterion) {
    let source = synthetic_source();
    let doc = LatexDocument::parse(&source).unwrap();
    c.bench_function("extract_cite_keys", |b| {
        b.iter(|| extract_cite_keys(black_box(&doc)))
    });
}

fn bench_parse_bib(c: &mut Criterion) {
    let source = synthetic_bib(200);
    c.bench_function("parse_bib_200_entries", |b| {
        b.iter(|| parse_bib(black_box(&source)))
    });
}

fn bench_citation_metrics(c: &mut Criterion) {
    let gt: BTreeSet<String> = (0..150).map(|i| format!("key{i}")).collect();
    let pred: BTreeSet<String> = (50..220).map(|i| format!("key{i}")).collect();
    let bib: BTreeSet<String> = (0..200).map(|i| format!("key{i}")).collect();
    c.bench_function("citation_report", |b| {
        b.iter(|| {
            CitationReport::from_sets(
                black_box(gt.clone()),
                black_box(pred.clone()),
                black_box(bib.clone()),
            )
        })
    });
}

fn bench_caption_jaccard(c: &mut Criterion) {
    let a = "Main results on the CIFAR-10 and CIFAR-100 classification benchmarks";
    let b_caption = "Main classification results across CIFAR-10/100 benchmark suites";
    c.bench_function("caption_jaccard", |b| {
        b.iter(|| caption_jaccard(black_box(a), black_box(b_caption)))
    });
}

criterion_group!(
    benches,
    bench_parse_document,
    bench_extract_cite_keys,
    bench_parse_bib,
    bench_citation_metrics,
    bench_caption_jaccard
);
criterion_main!(benches);
