/**
 * Typed client for the diagnosis HTTP service.
 *
 * Every function talks JSON to the endpoints exposed by `cchain serve`.
 * The interfaces mirror the service's response shapes one to one; nothing
 * here recomputes or post-processes the numbers the server sends.
 */
/** Non-2xx response, carrying the HTTP status and the service's detail text. */
export class ApiError extends Error {
    constructor(status, detail) {
        super(`${status}: ${detail}`);
        this.status = status;
        this.detail = detail;
        this.name = "ApiError";
    }
}
async function parseOrThrow(response) {
    if (response.ok) {
        return (await response.json());
    }
    let detail = response.statusText;
    try {
        const body = await response.json();
        if (typeof body?.detail === "string") {
            detail = body.detail;
        }
    }
    catch {
        // non-JSON error body; keep the status text
    }
    throw new ApiError(response.status, detail);
}
export class ApiClient {
    constructor(baseUrl = "", fetchFn = fetch) {
        this.baseUrl = baseUrl;
        this.fetchFn = fetchFn;
    }
    request(path, init) {
        return this.fetchFn(this.baseUrl + path, init);
    }
    post(path, body) {
        return this.request(path, {
            method: "POST",
            headers: { "content-type": "application/json" },
            body: body === undefined ? undefined : JSON.stringify(body),
        });
    }
    async listAnomalies() {
        const data = await parseOrThrow(await this.request("/anomalies"));
        return data.anomalies;
    }
    async createSession(anomaly) {
        return parseOrThrow(await this.post("/sessions", { anomaly }));
    }
    async getSession(sessionId) {
        return parseOrThrow(await this.request(`/sessions/${sessionId}`));
    }
    /**
     * Submit one answer.  The service runs in strict mode by default: it
     * rejects the call with 409 unless `questionId` is the question the
     * interview is currently waiting on.
     */
    async answer(sessionId, questionId, value) {
        return parseOrThrow(await this.post(`/sessions/${sessionId}/answers`, {
            question_id: questionId,
            value,
        }));
    }
    async undo(sessionId) {
        return parseOrThrow(await this.post(`/sessions/${sessionId}/undo`));
    }
    async finalize(sessionId, early = false) {
        return parseOrThrow(await this.post(`/sessions/${sessionId}/finalize`, { early }));
    }
}
