//! OpenAPI 3.1 description rendered from the route documentation.

use glassflow_core::graph::PipelineGraph;
use serde_json::{json, Map, Value};

use crate::error::ErrorCode;
use crate::manifest::{document_routes, RouteDoc};

fn operation_object(doc: &RouteDoc) -> Value {
    let mut parameters = Vec::new();
    for p in &doc.path_params {
        parameters.push(json!({"name": p.name, "in": "path", "required": true, "schema": p.schema}));
    }
    for p in &doc.query_params {
        parameters.push(json!({"name": p.name, "in": "query", "required": p.required, "schema": p.schema}));
    }
    let operation_id = doc.tool_name.clone().unwrap_or_else(|| doc.route.operation.name());
    let mut op = json!({
        "operationId": operation_id,
        "summary": doc.summary,
        "description": doc.description,
        "tags": [doc.route.block_id.as_deref().unwrap_or("pipeline")],
        "parameters": parameters,
        "responses": {
            "200": {"description": "Success", "content": {"application/json": {"schema": {}}}},
            "default": {
                "description": "Error envelope",
                "content": {"application/json": {"schema": {"$ref": "#/components/schemas/ApiError"}}}
            }
        }
    });
    if let Some(body) = &doc.body {
        op["requestBody"] = json!({
            "required": true,
            "content": {"application/json": {"schema": body}}
        });
    }
    op
}

/// Every route of the graph, grouped by path.
pub fn openapi_document(graph: &PipelineGraph) -> Value {
    let mut paths: Map<String, Value> = Map::new();
    for doc in document_routes(graph) {
        let entry = paths.entry(doc.route.path.clone()).or_insert_with(|| json!({}));
        entry[doc.route.method.as_str().to_ascii_lowercase()] = operation_object(&doc);
    }
    let codes: Vec<&str> = ErrorCode::ALL.iter().map(ErrorCode::as_str).collect();
    json!({
        "openapi": "3.1.0",
        "info": {
            "title": "glassflow pipeline API",
            "version": env!("CARGO_PKG_VERSION"),
            "description": "Generated from the block registry: one endpoint family per block kind plus pipeline-level endpoints."
        },
        "paths": paths,
        "components": {
            "schemas": {
                "ApiError": {
                    "type": "object",
                    "properties": {
                        "status": {"type": "integer"},
                        "code": {"type": "string", "enum": codes},
                        "message": {"type": "string"},
                        "detail": {}
                    },
                    "required": ["status", "code", "message", "detail"]
                }
            },
            "securitySchemes": {"bearer": {"type": "http", "scheme": "bearer"}}
        }
    })
}

/// `(METHOD, path)` pairs described by an OpenAPI document.
pub fn described_routes(doc: &Value) -> Vec<(String, String)> {
    let mut out = Vec::new();
    if let Some(paths) = doc["paths"].as_object() {
        for (path, ops) in paths {
            for method in ops.as_object().into_iter().flat_map(|o| o.keys()) {
                out.push((method.to_ascii_uppercase(), path.clone()));
            }
        }
    }
    out
}
