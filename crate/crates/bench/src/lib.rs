//! Shared fixtures for the benchmarks. Everything is seeded so runs are
//! comparable.

use rand::rngs::StdRng;
use rand::{Rng, RngCore, SeedableRng};
use xbase::xml::Element;

pub fn values(count: usize, len: usize, seed: u64) -> Vec<Vec<u8>> {
    let mut rng = StdRng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let mut v = vec![0u8; len];
            rng.fill_bytes(&mut v);
            v
        })
        .collect()
}

/// Input with runs of random length, roughly half run-heavy.
pub fn runny(len: usize, seed: u64) -> Vec<u8> {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut v = Vec::with_capacity(len);
    while v.len() < len {
        let n = rng.gen_range(1..300).min(len - v.len());
        if rng.gen_bool(0.5) {
            v.extend(std::iter::repeat_n(rng.gen::<u8>(), n));
        } else {
            v.extend((0..n).map(|_| rng.gen::<u8>()));
        }
    }
    v
}

/// `<library>` with `books` books, each with a title and a few paragraphs.
pub fn library(books: usize) -> Element {
    let mut lib = Element::new("library");
    for i in 0..books {
        let mut book = Element::new("book")
            .with_attr("id", i.to_string())
            .with_child(Element::new("title").with_text(format!("Volume {i} & more")));
        for p in 0..4 {
            book = book.with_child(Element::new("p").with_text(format!("paragraph {p} of book {i}")));
        }
        lib = lib.with_child(book);
    }
    lib
}
