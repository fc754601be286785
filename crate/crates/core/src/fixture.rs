//! The running-shoes catalog used by the demo, the fixture embedder and the
//! end-to-end tests.
//!
//! Embeddings and the Reebok/ASICS prices come from the worked e-commerce
//! example. The Nike and Adidas prices are fixture choices: both sit above the
//! $100 budget so that only the Reebok survives the price filter.

use crate::document::{Document, Metadata};
use crate::metadata;
use crate::vector::Vector;

/// The shopper's question in the worked example.
pub const DEMO_QUESTION: &str = "I need comfortable running shoes under $100";

/// Its 2-D embedding.
pub const DEMO_QUERY_EMBEDDING: [f64; 2] = [3.0, 2.7];

/// Filter expressing the shopper's budget.
pub const DEMO_FILTER: &str = "price<100";

pub struct ShoeFixture {
    pub id: &'static str,
    pub name: &'static str,
    pub brand: &'static str,
    pub description: &'static str,
    pub price: f64,
    pub embedding: [f64; 2],
    /// Distance to [`DEMO_QUERY_EMBEDDING`] as printed in the worked example,
    /// rounded to two decimals.
    pub expected_distance: f64,
}

pub const SHOES: [ShoeFixture; 4] = [
    ShoeFixture {
        id: "nike-zoomx",
        name: "Nike ZoomX Infinity Run",
        brand: "Nike",
        description: "Nike ZoomX Infinity Run: cushioned road running shoe built for stability",
        price: 150.0,
        embedding: [1.2, 3.5],
        expected_distance: 1.97,
    },
    ShoeFixture {
        id: "adidas-ultraboost",
        name: "Adidas UltraBoost",
        brand: "Adidas",
        description: "Adidas UltraBoost: responsive running shoe with a knit upper",
        price: 120.0,
        embedding: [2.0, 3.2],
        expected_distance: 1.12,
    },
    ShoeFixture {
        id: "reebok-floatride",
        name: "Reebok Floatride",
        brand: "Reebok",
        description: "Reebok Floatride: lightweight, comfortable running shoe for daily miles",
        price: 90.0,
        embedding: [3.1, 2.9],
        expected_distance: 0.22,
    },
    ShoeFixture {
        id: "asics-gel-kayano",
        name: "ASICS Gel-Kayano",
        brand: "ASICS",
        description: "ASICS Gel-Kayano: supportive running shoe with gel cushioning",
        price: 110.0,
        embedding: [2.5, 3.0],
        expected_distance: 0.58,
    },
];

/// Expected unfiltered ranking for the demo query, nearest first.
pub const DEMO_RANKING: [&str; 4] = [
    "reebok-floatride",
    "asics-gel-kayano",
    "adidas-ultraboost",
    "nike-zoomx",
];

impl ShoeFixture {
    pub fn metadata(&self) -> Metadata {
        metadata! {
            "brand" => self.brand,
            "name" => self.name,
            "price" => self.price,
        }
    }

    pub fn document(&self) -> Document {
        let embedding =
            Vector::new(self.embedding.to_vec()).expect("fixture embeddings are finite");
        Document::new(self.id, self.description, self.metadata(), embedding)
            .expect("fixture documents are valid")
    }
}

/// The four catalog documents, in catalog order.
pub fn shoe_documents() -> Vec<Document> {
    SHOES.iter().map(ShoeFixture::document).collect()
}

pub fn demo_query() -> Vector {
    Vector::new(DEMO_QUERY_EMBEDDING.to_vec()).expect("finite")
}

/// The catalog as JSONL, one record per line, with embeddings.
pub fn shoe_catalog_jsonl() -> String {
    let mut out = String::new();
    for shoe in &SHOES {
        let record = serde_json::json!({
            "id": shoe.id,
            "text": shoe.description,
            "metadata": shoe.metadata(),
            "embedding": shoe.embedding,
        });
        out.push_str(&record.to_string());
        out.push('\n');
    }
    out
}
