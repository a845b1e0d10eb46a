async def agent_main(days_back=15):
    now = codemem_now()
    cutoff = (now - timedelta(days=days_back)).strftime("%Y-%m-%dT%H:%M:%SZ")
    folder = "Email Attachments " + now.strftime("%B")
    emails = await outlook__list_emails(
        filter=f"receivedDateTime >= {cutoff} and hasAttachments eq true"
    )
    uploaded = []
    skipped = []
    for email in emails:
        if email["from"].lower().endswith("@agentr.dev"):
            skipped.append(email["id"])
            continue
        attachment = await outlook__get_attachment(email_id=email["id"])
        name = attachment["filename"]
        if not name.lower().endswith((".pdf", ".xlsx")):
            skipped.append(email["id"])
            continue
        meta = attachment.get("metadata") or {}
        company = meta.get("company", "Unknown")
        if company == "codeword":
            company = meta.get("real_company", company)
        path = f"{folder}/{company}/{name}"
        await onedrive__upload_file(path=path, content=attachment["content"])
        uploaded.append(path)
    for path in uploaded:
        print("uploaded", path)
    print(f"{len(uploaded)} uploaded, {len(skipped)} skipped")
    return {"uploaded": uploaded, "skipped": skipped}
