use serde::Serialize;

/// One long-format metric value.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricRow {
    pub entity: String,
    pub metric: String,
    pub value: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Metrics {
    pub rows: Vec<MetricRow>,
}

impl Metrics {
    pub fn push(&mut self, entity: &str, metric: &str, value: f64) {
        self.rows.push(MetricRow { entity: entity.to_string(), metric: metric.to_string(), value });
    }

    /// Pushes only defined values; an undefined ratio is absent, never 0.
    pub fn push_opt(&mut self, entity: &str, metric: &str, value: Option<f64>) {
        if let Some(v) = value {
            self.push(entity, metric, v);
        }
    }

    pub fn get(&self, entity: &str, metric: &str) -> Option<f64> {
        self.rows.iter().find(|r| r.entity == entity && r.metric == metric).map(|r| r.value)
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }
}
