use serde::{Deserialize, Serialize};

use super::NnError;

/// One layer of a feature-extractor network.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    /// 5x5 convolution, stride 1, symmetric zero padding.
    Conv5x5 { filters: usize, padding: usize },
    /// 2x2 average pooling with stride 2 (odd trailing rows/columns are dropped).
    AvgPool2x2,
    Relu,
    Linear { units: usize },
    Softmax,
}

/// Activation shape between layers.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Shape {
    Image { channels: usize, height: usize, width: usize },
    Flat(usize),
}

impl Shape {
    pub fn size(self) -> usize {
        match self {
            Shape::Image { channels, height, width } => channels * height * width,
            Shape::Flat(n) => n,
        }
    }
}

/// Network layout: input image shape plus an ordered layer list whose last
/// two entries (`Linear` + `Softmax`) form the temporary prediction layer.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchSpec {
    pub name: String,
    /// (channels, height, width); flat inputs use height = 1.
    pub input: (usize, usize, usize),
    pub layers: Vec<LayerSpec>,
}

impl ArchSpec {
    /// LeNet-5 for 28x28 greyscale inputs. The first convolution pads by 2 so
    /// the classic 16x5x5 map feeds the 120-unit layer (61706 parameters).
    pub fn lenet5() -> Self {
        use LayerSpec::*;
        ArchSpec {
            name: "lenet5".into(),
            input: (1, 28, 28),
            layers: vec![
                Conv5x5 { filters: 6, padding: 2 },
                Relu,
                AvgPool2x2,
                Conv5x5 { filters: 16, padding: 0 },
                Relu,
                AvgPool2x2,
                Linear { units: 120 },
                Relu,
                Linear { units: 84 },
                Relu,
                Linear { units: 10 },
                Softmax,
            ],
        }
    }

    /// 784 -> 128 -> 84 multilayer perceptron with a 10-way prediction layer.
    pub fn mlp() -> Self {
        Self::mlp_with(784, &[128, 84], 10)
    }

    pub fn mlp_with(input: usize, hidden: &[usize], classes: usize) -> Self {
        let mut layers = Vec::new();
        for &units in hidden {
            layers.push(LayerSpec::Linear { units });
            layers.push(LayerSpec::Relu);
        }
        layers.push(LayerSpec::Linear { units: classes });
        layers.push(LayerSpec::Softmax);
        ArchSpec {
            name: format!("mlp{input}-{}", hidden.iter().map(|h| h.to_string()).collect::<Vec<_>>().join("-")),
            input: (1, 1, input),
            layers,
        }
    }

    pub fn by_name(name: &str) -> Result<Self, NnError> {
        match name {
            "lenet5" => Ok(Self::lenet5()),
            "mlp" => Ok(Self::mlp()),
            other => Err(NnError::InvalidArch(format!("unknown architecture {other:?}"))),
        }
    }

    pub fn input_shape(&self) -> Shape {
        let (c, h, w) = self.input;
        if c == 1 && h == 1 {
            Shape::Flat(w)
        } else {
            Shape::Image { channels: c, height: h, width: w }
        }
    }

    pub fn input_dim(&self) -> usize {
        self.input_shape().size()
    }

    /// Input shape of every layer followed by the network output shape.
    pub fn shapes(&self) -> Result<Vec<Shape>, NnError> {
        let n = self.layers.len();
        if n < 2
            || !matches!(self.layers[n - 2], LayerSpec::Linear { .. })
            || self.layers[n - 1] != LayerSpec::Softmax
        {
            return Err(NnError::InvalidArch("network must end in Linear + Softmax".into()));
        }
        if self.layers[..n - 1].contains(&LayerSpec::Softmax) {
            return Err(NnError::InvalidArch("Softmax is only allowed as the final layer".into()));
        }
        let mut shapes = vec![self.input_shape()];
        for layer in &self.layers {
            let cur = *shapes.last().expect("non-empty");
            let next = match (*layer, cur) {
                (LayerSpec::Conv5x5 { filters, padding }, Shape::Image { height, width, .. }) => {
                    let (h, w) = (height + 2 * padding, width + 2 * padding);
                    if h < 5 || w < 5 || filters == 0 {
                        return Err(NnError::InvalidArch(format!("conv does not fit a {height}x{width} map")));
                    }
                    Shape::Image { channels: filters, height: h - 4, width: w - 4 }
                }
                (LayerSpec::AvgPool2x2, Shape::Image { channels, height, width }) => {
                    if height < 2 || width < 2 {
                        return Err(NnError::InvalidArch("pool on a map smaller than 2x2".into()));
                    }
                    Shape::Image { channels, height: height / 2, width: width / 2 }
                }
                (LayerSpec::Conv5x5 { .. } | LayerSpec::AvgPool2x2, Shape::Flat(_)) => {
                    return Err(NnError::InvalidArch("spatial layer after flattening".into()));
                }
                (LayerSpec::Relu | LayerSpec::Softmax, s) => s,
                (LayerSpec::Linear { units }, _) => {
                    if units == 0 {
                        return Err(NnError::InvalidArch("linear layer with zero units".into()));
                    }
                    Shape::Flat(units)
                }
            };
            shapes.push(next);
        }
        Ok(shapes)
    }

    /// Output width of the feature extractor (everything before the final Linear).
    pub fn embedding_dim(&self) -> Result<usize, NnError> {
        let shapes = self.shapes()?;
        Ok(shapes[self.layers.len() - 2].size())
    }

    pub fn num_outputs(&self) -> Result<usize, NnError> {
        Ok(self.shapes()?.last().expect("non-empty").size())
    }

    /// (weights, biases) shapes for every layer that has parameters.
    pub fn param_shapes(&self) -> Result<Vec<Option<((usize, usize), usize)>>, NnError> {
        let shapes = self.shapes()?;
        Ok(self
            .layers
            .iter()
            .zip(&shapes)
            .map(|(layer, input)| match (*layer, *input) {
                (LayerSpec::Conv5x5 { filters, .. }, Shape::Image { channels, .. }) => {
                    Some(((filters, channels * 25), filters))
                }
                (LayerSpec::Linear { units }, s) => Some(((units, s.size()), units)),
                _ => None,
            })
            .collect())
    }

    pub fn param_count(&self) -> Result<usize, NnError> {
        Ok(self
            .param_shapes()?
            .into_iter()
            .flatten()
            .map(|((r, c), b)| r * c + b)
            .sum())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lenet5_matches_reference_parameter_count() {
        let arch = ArchSpec::lenet5();
        assert_eq!(arch.param_count().unwrap(), 61706);
        assert_eq!(arch.embedding_dim().unwrap(), 84);
        assert_eq!(arch.num_outputs().unwrap(), 10);
        let shapes = arch.shapes().unwrap();
        assert_eq!(shapes[1], Shape::Image { channels: 6, height: 28, width: 28 });
        assert_eq!(shapes[6], Shape::Image { channels: 16, height: 5, width: 5 });
    }

    #[test]
    fn mlp_parameter_count_is_closed_form() {
        let arch = ArchSpec::mlp();
        let expected = 784 * 128 + 128 + 128 * 84 + 84 + 84 * 10 + 10;
        assert_eq!(arch.param_count().unwrap(), expected);
        assert_eq!(arch.embedding_dim().unwrap(), 84);
    }

    #[test]
    fn rejects_broken_layouts() {
        let mut a = ArchSpec::mlp();
        a.layers.pop();
        assert!(a.shapes().is_err());

        let mut b = ArchSpec::mlp();
        b.layers.insert(0, LayerSpec::Softmax);
        assert!(b.shapes().is_err());

        let mut c = ArchSpec::mlp();
        c.layers.insert(0, LayerSpec::AvgPool2x2);
        assert!(c.shapes().is_err());

        let d = ArchSpec {
            name: "tiny".into(),
            input: (1, 3, 3),
            layers: vec![LayerSpec::Conv5x5 { filters: 2, padding: 0 }, LayerSpec::Linear { units: 2 }, LayerSpec::Softmax],
        };
        assert!(d.shapes().is_err());
        assert!(ArchSpec::by_name("resnet").is_err());
    }
}
