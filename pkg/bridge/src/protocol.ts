/**
 * Wire protocol: newline-delimited JSON over the adapter's stdio.
 *
 * Every request carries a monotonically increasing id and is answered by
 * exactly one response with the same id. Version compatibility is
 * negotiated by the `hello` exchange before anything else happens.
 */

export const PROTOCOL_VERSION = 1;

export type Command =
  | "hello"
  | "init"
  | "train_task"
  | "eval_upto"
  | "param_count"
  | "shutdown";

export interface BridgeRequest {
  id: number;
  cmd: Command;
  payload?: Record<string, unknown>;
}

export interface BridgeResponse {
  id: number;
  ok: boolean;
  payload?: Record<string, unknown>;
  error?: string;
}

/** Inline example arrays; the usual carrier at toy scale. */
export interface InlineData {
  features: number[][];
  labels: number[];
}

/** Reference to a JSON file holding {features, labels}; used instead of
 * inline arrays once payloads get large. */
export interface DataRef {
  path: string;
}

export type TaskData = InlineData | DataRef;

export function isDataRef(data: TaskData): data is DataRef {
  return typeof (data as DataRef).path === "string";
}

export function serializeRequest(req: BridgeRequest): string {
  return JSON.stringify(req) + "\n";
}

export function serializeResponse(res: BridgeResponse): string {
  return JSON.stringify(res) + "\n";
}

export function parseRequest(line: string): BridgeRequest | null {
  try {
    const value = JSON.parse(line) as BridgeRequest;
    if (typeof value.id !== "number" || typeof value.cmd !== "string") {
      return null;
    }
    return value;
  } catch {
    return null;
  }
}

export function parseResponse(line: string): BridgeResponse | null {
  try {
    const value = JSON.parse(line) as BridgeResponse;
    if (typeof value.id !== "number" || typeof value.ok !== "boolean") {
      return null;
    }
    return value;
  } catch {
    return null;
  }
}
