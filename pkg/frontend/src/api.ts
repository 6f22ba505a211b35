// Thin client for the gateway's public HTTP routes. Every call goes
// through one request helper so tests can swap the transport.

export interface ApiError {
    error: string;
    message?: string;
}

export type Fetcher = (
    url: string,
    init: { method: string; headers: Record<string, string>; body?: string },
) => Promise<{ status: number; json: () => Promise<unknown> }>;

export class GatewayClient {
    private token: string | null = null;

    constructor(
        private readonly baseUrl: string,
        private readonly fetcher: Fetcher = (url, init) => fetch(url, init),
    ) {}

    setToken(token: string | null): void {
        this.token = token;
    }

    async request<T>(method: string, path: string, body?: unknown): Promise<T> {
        const headers: Record<string, string> = {
            "content-type": "application/json",
        };
        if (this.token !== null) {
            headers["authorization"] = `Bearer ${this.token}`;
        }
        const response = await this.fetcher(this.baseUrl + path, {
            method,
            headers,
            body: body === undefined ? undefined : JSON.stringify(body),
        });
        const payload = await response.json();
        if (response.status >= 400) {
            throw Object.assign(new Error(`${method} ${path} -> ${response.status}`), {
                status: response.status,
                payload: payload as ApiError,
            });
        }
        return payload as T;
    }

    // -- auth
    async login(username: string, password: string): Promise<string> {
        const out = await this.request<{ token: string }>(
            "POST", "/api/auth/login", { username, password });
        this.token = out.token;
        return out.token;
    }

    // -- conference
    joinByToken(token: string) {
        return this.request("GET",
            `/api/conference/join?token=${encodeURIComponent(token)}`);
    }
    startSession(sessionId: string) {
        return this.request("POST", `/api/conference/sessions/${sessionId}/start`);
    }
    endSession(sessionId: string) {
        return this.request("POST", `/api/conference/sessions/${sessionId}/end`);
    }
    addParticipant(sessionId: string, participantId: string) {
        return this.request("POST",
            `/api/conference/sessions/${sessionId}/participants`,
            { participant_id: participantId });
    }
    removeParticipant(sessionId: string, ref: string) {
        return this.request("DELETE",
            `/api/conference/sessions/${sessionId}/participants/${ref}`);
    }
    setMedia(sessionId: string, targetRef: string, device: string, on: boolean) {
        return this.request("POST", `/api/conference/sessions/${sessionId}/media`,
            { target: targetRef, device, on });
    }
    toolEvent(sessionId: string, kind: string, params: object) {
        return this.request("POST", `/api/conference/sessions/${sessionId}/tool`,
            { kind, params });
    }
    attachNote(sessionId: string, text: string) {
        return this.request("POST", `/api/conference/sessions/${sessionId}/notes`,
            { text });
    }
    pollFrames(sessionId: string, ref: string) {
        return this.request("GET",
            `/api/conference/sessions/${sessionId}/frames?ref=${encodeURIComponent(ref)}`);
    }

    // -- robots
    fleet() {
        return this.request("GET", "/api/robot/fleet");
    }
    startTeleop(robotId: string) {
        return this.request<{ channel_id: string; session_id: string }>(
            "POST", `/api/robot/${robotId}/teleop`);
    }
    endTeleop(robotId: string) {
        return this.request("DELETE", `/api/robot/${robotId}/teleop`);
    }
    sendCommand(channelId: string, command: object) {
        return this.request("POST", `/api/robot/channel/${channelId}/cmd`, command);
    }
    heartbeat(channelId: string) {
        return this.request("POST", `/api/robot/channel/${channelId}/heartbeat`);
    }
    coverage(robotId: string) {
        return this.request("GET", `/api/robot/${robotId}/coverage`);
    }

    // -- triage
    submitTriage(questionnaire: object) {
        return this.request("POST", "/api/triage/submit", questionnaire);
    }
    scheduleTriage(resultId: string, name: string, email: string) {
        return this.request("POST", "/api/triage/schedule",
            { result_id: resultId, name, email });
    }
}
