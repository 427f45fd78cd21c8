//! Small built-in datasets for demos and tests.

use rand::Rng;

use crate::rng;
use crate::table::{ColumnKind, Dataset, Schema, Task, Value};

const COLORS: [&str; 3] = ["red", "green", "blue"];
const SHAPES: [&str; 4] = ["circle", "square", "triangle", "hexagon"];
const SIZES: [&str; 3] = ["small", "medium", "large"];
const TEXTURES: [&str; 5] = ["matte", "gloss", "rough", "soft", "grid"];
const CLASSES: [&str; 3] = ["alpha", "beta", "gamma"];

/// Deterministic class rule over the two informative columns.
pub fn rule_class(color: &str, shape: &str) -> &'static str {
    let ci = COLORS.iter().position(|c| *c == color).expect("known color");
    let si = SHAPES.iter().position(|s| *s == shape).expect("known shape");
    CLASSES[(ci + 2 * si) % 3]
}

/// A labeled categorical dataset where the class is a deterministic function
/// of the first two columns; the last two columns are uniform noise.
pub fn rule_dataset(n: usize, seed: u64) -> Dataset {
    let schema = Schema::new(
        vec!["color".into(), "shape".into(), "size".into(), "texture".into()],
        vec![ColumnKind::Categorical; 4],
        "label".into(),
        Task::Classification,
    )
    .expect("static schema");
    let mut rng = rng::stream(seed);
    let rows = (0..n)
        .map(|_| {
            let color = COLORS[rng.random_range(0..COLORS.len())];
            let shape = SHAPES[rng.random_range(0..SHAPES.len())];
            let size = SIZES[rng.random_range(0..SIZES.len())];
            let texture = TEXTURES[rng.random_range(0..TEXTURES.len())];
            vec![
                Value::Cat(color.into()),
                Value::Cat(shape.into()),
                Value::Cat(size.into()),
                Value::Cat(texture.into()),
                Value::Cat(rule_class(color, shape).into()),
            ]
        })
        .collect();
    Dataset::new(schema, rows).expect("generated rows conform to schema")
}

/// CSV text for a 150-row, 4-feature, 3-class table in the shape of the
/// classic iris measurements (deterministic synthetic values).
pub fn iris_like_csv() -> String {
    let mut out = String::from("sepal_length,sepal_width,petal_length,petal_width,species\n");
    let species = ["setosa", "versicolor", "virginica"];
    let centers = [
        [5.0, 3.4, 1.5, 0.2],
        [5.9, 2.8, 4.3, 1.3],
        [6.6, 3.0, 5.6, 2.0],
    ];
    let mut rng = rng::stream(1009);
    for (s, name) in species.iter().enumerate() {
        for _ in 0..50 {
            let mut vals = [0.0f64; 4];
            for (j, v) in vals.iter_mut().enumerate() {
                let jitter: f64 = rng.random_range(-0.4..0.4);
                *v = ((centers[s][j] + jitter) * 10.0).round() / 10.0;
            }
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                vals[0], vals[1], vals[2], vals[3], name
            ));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rule_dataset_shape() {
        let ds = rule_dataset(600, 5);
        assert_eq!(ds.len(), 600);
        assert_eq!(ds.schema().num_features(), 4);
        assert_eq!(ds.classes().len(), 3);
        for i in 0..ds.len() {
            let color = ds.features(i)[0].as_cat().unwrap();
            let shape = ds.features(i)[1].as_cat().unwrap();
            assert_eq!(ds.target(i).as_cat().unwrap(), rule_class(color, shape));
        }
    }

    #[test]
    fn rule_dataset_is_deterministic() {
        assert_eq!(rule_dataset(100, 3), rule_dataset(100, 3));
        assert_ne!(rule_dataset(100, 3), rule_dataset(100, 4));
    }
}
