//! Reference records shared by tests, benches and the CLI.

/// A three-interval engagement report: user 1 on item 10, scrolled to 300px
/// in the first interval and 500px in the third.
pub const SAMPLE_REPORT: &str = r#"{
  "entityId":1,
  "entityType":"user",
  "targetEntityId":10,
  "targetEntityType":"item",
  "ip":"12.345.6.789",
  "timestamp":1459535879,
  "type":"engagement_report",
  "properties":{
    "report":[
      [
        {"scroll":{"document_height":5000,"screen_height":100,"screen_width":980,"scroll_top":300}},
        {"mousemove":1}
      ],
      [
        {"visibilitychange":1}
      ],
      [
        {"visibilitychange":1},
        {"mousemove":1},
        {"scroll":{"document_height":5000,"screen_height":100,"screen_width":980,"scroll_top":500}},
        {"beforeunload":1}
      ]
    ]
  }
}"#;
